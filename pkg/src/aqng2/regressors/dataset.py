"""Fixed-length quadrature windows with g2 labels, and their on-disk form.

A dataset directory holds ``manifest.json``, ``windows.qwf`` (every window
concatenated into one QWF1 blob, float32) and ``labels.csv`` with columns
``index,label,source``.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import InconsistentWindowLength, RecordTooShort
from ..homodyne import QuadratureRecord, accumulate_moments, g2_from_moments
from ..io import read_qwf, write_qwf

SPLITS = ("train", "validation", "test")
LABEL_SOURCES = ("moment_long_record", "field_oracle")
MIN_LABEL_SAMPLES = 1_000_000


@dataclass
class WindowDataset:
    """Raw windows plus the normalisation that standardises them.

    ``windows`` are stored unnormalised; :meth:`standardized` applies
    ``(x - mean) / scale`` with the training-split statistics.
    """

    windows: np.ndarray
    labels: np.ndarray
    normalization: tuple = (0.0, 1.0)
    split_tag: str = "train"
    sources: list = field(default_factory=list)
    sample_rate_hz: float = 1.0

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float32)
        if self.windows.ndim != 2:
            raise InconsistentWindowLength("windows must form a 2-D array of equal-length rows")
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.labels.shape != (self.windows.shape[0],):
            raise ValueError("one label per window required")
        if not np.all(np.isfinite(self.labels)) or np.any(self.labels < 0):
            raise ValueError("labels must be finite and non-negative")
        if self.split_tag not in SPLITS:
            raise ValueError(f"split_tag must be one of {SPLITS}")
        if not self.sources:
            self.sources = [""] * len(self.labels)
        self.normalization = (float(self.normalization[0]), float(self.normalization[1]))

    def __len__(self):
        return self.labels.size

    @property
    def window_len(self):
        return self.windows.shape[1]

    def standardized(self, dtype=np.float32):
        mean, scale = self.normalization
        return ((self.windows - mean) / scale).astype(dtype)


def normalization_of(windows):
    """Z-score statistics (mean, standard deviation) over every sample."""
    w = np.asarray(windows, dtype=np.float64)
    return float(w.mean()), float(w.std())


def build_dataset(records, cal, window_len=5000, windows_per_record=4,
                  label_source="field_oracle", oracle_labels=None, split_tag="train",
                  normalization=None, min_label_samples=MIN_LABEL_SAMPLES):
    """Cut contiguous, non-overlapping windows from records and label them.

    ``field_oracle`` takes one label per record from ``oracle_labels`` (the
    simulator's ground truth).  ``moment_long_record`` estimates g2 from the
    samples after the windows, which must number at least
    ``min_label_samples``.  ``normalization`` defaults to the statistics of
    these windows and should be passed from the training split for the
    others.
    """
    if label_source not in LABEL_SOURCES:
        raise ValueError(f"label_source must be one of {LABEL_SOURCES}")
    if label_source == "field_oracle":
        if oracle_labels is None or len(oracle_labels) != len(records):
            raise ValueError("field_oracle labels need one oracle value per record")
    need = window_len * windows_per_record
    windows, labels, sources = [], [], []
    rate = 1.0
    for i, record in enumerate(records):
        samples = np.asarray(record.samples)
        extra = min_label_samples if label_source == "moment_long_record" else 0
        if samples.size < need + extra:
            raise RecordTooShort(
                f"record {i} has {samples.size} samples, needs {need + extra}"
            )
        if label_source == "field_oracle":
            label = float(oracle_labels[i])
        else:
            label = g2_from_moments(accumulate_moments(samples[need:]), cal).value
        windows.append(samples[:need].reshape(windows_per_record, window_len))
        labels.extend([label] * windows_per_record)
        sources.extend([record.label or f"record{i}"] * windows_per_record)
        rate = record.sample_rate_hz
    if windows:
        lengths = {w.shape[1] for w in windows}
        if len(lengths) != 1:
            raise InconsistentWindowLength(f"mixed window lengths {sorted(lengths)}")
        stacked = np.concatenate(windows).astype(np.float32)
    else:
        stacked = np.zeros((0, window_len), dtype=np.float32)
    if normalization is None:
        normalization = normalization_of(stacked) if stacked.size else (0.0, 1.0)
    return WindowDataset(stacked, np.asarray(labels), normalization, split_tag, sources, rate)


def write_dataset(path, ds, label_source="field_oracle"):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_qwf(path / "windows.qwf", QuadratureRecord(ds.windows.reshape(-1), ds.sample_rate_hz), "f32")
    with open(path / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label", "source"])
        for i, (label, source) in enumerate(zip(ds.labels, ds.sources)):
            writer.writerow([i, repr(float(label)), source])
    manifest = {
        "format": "aqng2-window-dataset",
        "version": 1,
        "split_tag": ds.split_tag,
        "window_len": ds.window_len,
        "n_windows": len(ds),
        "normalization": {"mean": ds.normalization[0], "scale": ds.normalization[1]},
        "label_source": label_source,
        "windows_file": "windows.qwf",
        "labels_file": "labels.csv",
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def read_dataset(path):
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    record = read_qwf(path / manifest["windows_file"])
    n, length = manifest["n_windows"], manifest["window_len"]
    if record.samples.size != n * length:
        raise InconsistentWindowLength(
            f"{record.samples.size} samples do not form {n} windows of {length}"
        )
    labels, sources = [], []
    with open(path / manifest["labels_file"], newline="") as fh:
        for row in csv.DictReader(fh):
            labels.append(float(row["label"]))
            sources.append(row["source"])
    norm = manifest["normalization"]
    return WindowDataset(
        record.samples.reshape(n, length), np.asarray(labels), (norm["mean"], norm["scale"]),
        manifest["split_tag"], sources, record.sample_rate_hz,
    )
