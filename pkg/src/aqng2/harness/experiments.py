"""Experiment drivers behind the command-line interface.

Each function returns plain rows or documents; :mod:`aqng2.harness.cli`
only parses arguments and writes files.
"""

import json
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from ..exceptions import Aqng2Error, InconsistentWindowLength, ZeroPhotonNumber
from ..homodyne import (
    LoCalibration,
    accumulate_moments,
    g2_block_bootstrap,
    g2_from_moments,
)
from ..io import read_qwf, write_qwf
from ..regressors.dataset import build_dataset
from ..regressors.features import SummaryFeatures
from ..regressors.forest import RandomForestRegressor
from ..regressors.svr import LinearSVR
from ..seeding import HISTOGRAM, RECORD, SWEEP_CELL, derive_seed
from ..simulation import (
    AqnModel,
    envelope_variance,
    oracle_g2,
    simulate_record,
    simulate_vacuum,
)

SPLIT_KEYS = {"train": 0, "validation": 1, "test": 2}
REFERENCE_LENGTH = 1_000_000


def default_benchmark():
    text = resources.files("aqng2.harness").joinpath("data/benchmark.json").read_text()
    return json.loads(text)


def _status(exc):
    return type(exc).__name__


def _oracle_or_none(model):
    try:
        return oracle_g2(model)
    except ZeroPhotonNumber:
        return None


# -- simulate / estimate ---------------------------------------------------

def simulate_batch(model, count, n_samples, out_dir, sample_rate_hz=1.0, dtype="f32"):
    """Write ``count`` QWF1 records seeded ``model.seed + i`` plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(count):
        m = model.with_seed(model.seed + i)
        name = f"record_{i:05d}.qwf"
        write_qwf(out / name, simulate_record(m, n_samples, sample_rate_hz, name), dtype)
        entries.append({"file": name, "seed": m.seed, "oracle_g2": _oracle_or_none(m)})
    manifest = {
        "model": model.to_dict(),
        "n_samples": n_samples,
        "sample_rate_hz": sample_rate_hz,
        "dtype": dtype,
        "records": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def estimate_rows(paths, cal):
    """One row per file; degenerate records get a status instead of a value."""
    rows = []
    for path in paths:
        row = {"file": Path(path).name, "g2": "", "std_error": "", "n_samples": 0, "status": "ok"}
        try:
            record = read_qwf(path)
            row["n_samples"] = len(record)
            est = g2_from_moments(accumulate_moments(record), cal)
            row["g2"], row["std_error"] = est.value, est.std_error
        except Aqng2Error as exc:
            row["status"] = _status(exc)
        rows.append(row)
    return rows


# -- sweep -------------------------------------------------------------------

def sweep_rows(grid, n_samples, seed=0, n_blocks=100, n_resamples=200, sample_rate_hz=1.0):
    """Moment g2 for every grid cell, with block-bootstrap standard errors.

    All cells share one vacuum calibration of ``n_samples`` samples; cell
    ``(i, j)`` is seeded ``derive_seed(seed, SWEEP_CELL, i + 1, j + 1)``.
    """
    n_lo = grid.model_template.n_lo
    vac = simulate_vacuum(n_lo, n_samples, derive_seed(seed, SWEEP_CELL, 0, 0), sample_rate_hz)
    cal = LoCalibration(float(np.var(vac.samples)), float(np.mean(vac.samples)), n_samples)
    (name1, _), (name2, _) = grid.axis1, grid.axis2
    rows = []
    for i, j, knobs, model in grid.cells():
        cell_seed = derive_seed(seed, SWEEP_CELL, i + 1, j + 1)
        model = model.with_seed(cell_seed)
        row = {
            name1: knobs[name1], name2: knobs[name2],
            "coherent_photon": model.coherent_photon, "thermal_photon": model.thermal_photon,
            "bandwidth_frac": model.bandwidth_frac,
            "superbunch_k": "" if model.superbunch_k is None else model.superbunch_k,
            "g2": "", "oracle_g2": _oracle_or_none(model), "std_error": "", "status": "ok",
        }
        try:
            record = simulate_record(model, n_samples, sample_rate_hz)
            est = g2_block_bootstrap(record, cal, n_blocks, n_resamples, seed=cell_seed)
            row["g2"], row["std_error"] = est.value, est.std_error
        except Aqng2Error as exc:
            row["status"] = _status(exc)
        rows.append(row)
    return rows


# -- histogram -----------------------------------------------------------------

@dataclass
class HistogramResult:
    estimates: np.ndarray
    edges: np.ndarray
    counts: np.ndarray
    n_flagged: int
    oracle: float

    @property
    def mean(self):
        return float(np.mean(self.estimates))

    @property
    def std(self):
        return float(np.std(self.estimates, ddof=1))

    def summary(self):
        return {
            "n_estimates": int(self.estimates.size), "n_flagged": self.n_flagged,
            "mean": self.mean, "std": self.std, "oracle_g2": self.oracle,
            "n_bins": int(self.counts.size),
        }

    def rows(self):
        return [
            {"bin_left": float(a), "bin_right": float(b), "count": int(c)}
            for a, b, c in zip(self.edges[:-1], self.edges[1:], self.counts)
        ]


def histogram(model, n_estimates, window_len, seed=0):
    """Finite-window moment estimates from independent records.

    Estimate ``i`` uses a fresh record seeded ``derive_seed(seed,
    HISTOGRAM, i)`` and the exact ``n_lo`` as calibration.  Windows whose
    excess variance falls under the signal floor are counted in
    ``n_flagged`` and left out of the histogram.  Bins follow the
    Freedman-Diaconis rule.
    """
    if n_estimates < 100:
        raise ValueError(f"n_estimates must be >= 100, got {n_estimates}")
    cal = LoCalibration(model.n_lo, 0.0, 10**12)
    values, flagged = [], 0
    for i in range(n_estimates):
        record = simulate_record(model.with_seed(derive_seed(seed, HISTOGRAM, i)), window_len)
        try:
            values.append(g2_from_moments(accumulate_moments(record), cal).value)
        except Aqng2Error:
            flagged += 1
    values = np.asarray(values)
    if values.size < 2:
        raise ValueError("fewer than two usable estimates")
    edges = np.histogram_bin_edges(values, bins="fd")
    counts, edges = np.histogram(values, bins=edges)
    return HistogramResult(values, edges, counts, flagged, _oracle_or_none(model))


# -- benchmark dataset ---------------------------------------------------------

def benchmark_sources(cfg, n_records, seed, split):
    """Random source models for one split of the synthetic benchmark.

    Total photon number and filter cutoff are uniform over the configured
    ranges.  An ``envelope_fraction`` of sources are mostly thermal with a
    gamma envelope whose relative variance is uniform over
    ``envelope_variance``; the rest mix coherent and thermal light with a
    uniform thermal fraction.
    """
    rng = np.random.default_rng(derive_seed(seed, RECORD, SPLIT_KEYS[split]))
    n_lo = float(cfg["n_lo"])
    models = []
    for _ in range(n_records):
        total = rng.uniform(*cfg["total_photon"])
        bw = rng.uniform(*cfg["bandwidth_frac"])
        k = None
        if rng.uniform() < cfg["envelope_fraction"]:
            frac = rng.uniform(*cfg["envelope_thermal_fraction"])
            target = rng.uniform(*cfg["envelope_variance"])
            unit = envelope_variance(AqnModel(0.0, 1.0, bw, superbunch_k=1.0))
            k = unit / target
        else:
            frac = rng.uniform()
        models.append(AqnModel(total * (1.0 - frac), total * frac, bw, superbunch_k=k, n_lo=n_lo,
                               seed=int(rng.integers(2**63))))
    return models


def make_benchmark(cfg=None, seed=0, splits=("train", "validation", "test")):
    """``{split: WindowDataset}`` with oracle labels and training-split normalisation."""
    cfg = default_benchmark() if cfg is None else cfg
    wlen, wpr = int(cfg["window_len"]), int(cfg["windows_per_record"])
    rate = float(cfg.get("sample_rate_hz", 1.0))
    cal = LoCalibration(float(cfg["n_lo"]), 0.0, 10**12)
    out, norm = {}, None
    for split in splits:
        n_records = -(-int(cfg["n_windows"][split]) // wpr)
        models = benchmark_sources(cfg, n_records, seed, split)
        records = [simulate_record(m, wlen * wpr, rate, f"{split}{i:05d}") for i, m in enumerate(models)]
        ds = build_dataset(records, cal, wlen, wpr, "field_oracle", [oracle_g2(m) for m in models],
                           split, normalization=norm)
        norm = ds.normalization
        out[split] = ds
    return out


# -- evaluation ----------------------------------------------------------------

def baseline_pipelines(cfg=None, seed=0):
    """Feature-based baselines: summary features, standard scaling, regressor."""
    cfg = (default_benchmark() if cfg is None else cfg).get("baselines", {})
    return {
        "rf": make_pipeline(SummaryFeatures(), StandardScaler(),
                            RandomForestRegressor(random_state=seed, **cfg.get("rf", {}))),
        "svr": make_pipeline(SummaryFeatures(), StandardScaler(),
                             LinearSVR(random_state=seed, **cfg.get("svr", {}))),
    }


def mse(labels, predictions):
    labels = np.asarray(labels, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if labels.shape != predictions.shape:
        raise ValueError("labels and predictions differ in shape")
    return float(np.mean((predictions - labels) ** 2))


def diagonal_distance(labels, predictions):
    """Mean absolute distance of (measured, predicted) points from y = x."""
    d = np.asarray(predictions, float) - np.asarray(labels, float)
    return float(np.mean(np.abs(d)) / np.sqrt(2.0))


def evaluate(labels, predictions_by_method):
    """Metrics document plus scatter and error rows for each method.

    Non-finite predictions (e.g. moment estimates under the signal floor)
    count in ``n_invalid`` and are excluded from that method's metrics.
    """
    labels = np.asarray(labels, dtype=np.float64)
    metrics, scatter, errors = {}, [], []
    for method, pred in predictions_by_method.items():
        pred = np.asarray(pred, dtype=np.float64)
        if pred.shape != labels.shape:
            raise InconsistentWindowLength(f"{method}: {pred.size} predictions for {labels.size} labels")
        ok = np.isfinite(pred)
        metrics[method] = {
            "mse": mse(labels[ok], pred[ok]) if ok.any() else float("nan"),
            "mean_abs_diagonal_distance": diagonal_distance(labels[ok], pred[ok]) if ok.any() else float("nan"),
            "n": int(ok.sum()),
            "n_invalid": int((~ok).sum()),
        }
        for i, (y, p) in enumerate(zip(labels, pred)):
            scatter.append({"measured": float(y), "predicted": float(p), "method": method})
            errors.append({"index": i, "method": method, "error": float(p - y)})
    return metrics, scatter, errors


# -- acceleration benchmark --------------------------------------------------------

@dataclass
class BenchReport:
    n_sets: int
    wall_time_inference_s: float
    wall_time_moment_baseline_s: float
    speedup: float
    mse_by_method: dict = field(default_factory=dict)
    per_set_latency_inference_s: float = 0.0
    per_set_latency_moment_s: float = 0.0
    io_time_inference_s: float = 0.0
    io_time_moment_baseline_s: float = 0.0
    compute_time_inference_s: float = 0.0
    compute_time_moment_baseline_s: float = 0.0
    window_len: int = 0
    reference_length: int = REFERENCE_LENGTH
    note: str = ("computation only: acquisition time is not modelled; wall times include "
                 "file reads, which are also reported separately")

    def to_dict(self):
        return asdict(self)


def write_reference_pool(out_dir, cfg=None, seed=0, pool_size=8, reference_length=REFERENCE_LENGTH):
    """QWF1 records of ``reference_length`` samples for the moment baseline."""
    cfg = default_benchmark() if cfg is None else cfg
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    rate = float(cfg.get("sample_rate_hz", 1.0))
    for i, model in enumerate(benchmark_sources(cfg, pool_size, seed, "test")):
        path = out / f"reference_{i:03d}.qwf"
        write_qwf(path, simulate_record(model, reference_length, rate), "f32")
        paths.append(path)
    return paths


def bench(estimator, windows_path, reference_paths, n_sets, cal, mse_by_method=None):
    """Time window inference against 10^6-sample moment estimation.

    ``windows_path`` is a QWF1 file of concatenated windows (the dataset's
    ``windows.qwf``); it is read once and cycled until ``n_sets`` windows
    are available.  The baseline reads one reference record per set,
    cycling through ``reference_paths``, and runs the full moment
    pipeline on it.  Reads and compute are timed separately and the two
    runs are serialised.
    """
    if n_sets < 1:
        raise ValueError("n_sets must be >= 1")
    wlen = estimator.n_features_in_

    t0 = time.perf_counter()
    record = read_qwf(windows_path)
    io_inf = time.perf_counter() - t0
    if record.samples.size % wlen:
        raise InconsistentWindowLength(f"{record.samples.size} samples are not whole windows of {wlen}")
    windows = record.samples.reshape(-1, wlen)
    windows = windows[np.arange(n_sets) % windows.shape[0]]
    t0 = time.perf_counter()
    estimator.predict(windows)
    compute_inf = time.perf_counter() - t0

    io_base = compute_base = 0.0
    ref_len = 0
    for i in range(n_sets):
        t0 = time.perf_counter()
        ref = read_qwf(reference_paths[i % len(reference_paths)])
        t1 = time.perf_counter()
        g2_from_moments(accumulate_moments(ref), cal)
        t2 = time.perf_counter()
        io_base += t1 - t0
        compute_base += t2 - t1
        ref_len = len(ref)

    inference = io_inf + compute_inf
    baseline = io_base + compute_base
    return BenchReport(
        n_sets=n_sets,
        wall_time_inference_s=inference,
        wall_time_moment_baseline_s=baseline,
        speedup=baseline / inference,
        mse_by_method=dict(mse_by_method or {}),
        per_set_latency_inference_s=inference / n_sets,
        per_set_latency_moment_s=baseline / n_sets,
        io_time_inference_s=io_inf,
        io_time_moment_baseline_s=io_base,
        compute_time_inference_s=compute_inf,
        compute_time_moment_baseline_s=compute_base,
        window_len=wlen,
        reference_length=ref_len,
    )
