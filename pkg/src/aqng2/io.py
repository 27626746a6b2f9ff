"""QWF1 waveform files and calibration documents.

QWF1 layout (little-endian, 32-byte header)::

    0   4s   magic  b"QWF1"
    4   u32  version (1)
    8   u32  dtype   (0 = f32, 1 = f64)
    12  u32  reserved (0)
    16  f64  sample_rate_hz
    24  u64  count
    32  ...  count samples
"""

import json
import struct
from pathlib import Path

import numpy as np

from .exceptions import BadMagic, VersionMismatch
from .homodyne import LoCalibration, QuadratureRecord

QWF_MAGIC = b"QWF1"
QWF_VERSION = 1
_HEADER = struct.Struct("<4sIIIdQ")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {"f32": 0, "f64": 1, np.dtype("float32"): 0, np.dtype("float64"): 1}


def encode_qwf(samples, sample_rate_hz=1.0, dtype="f32"):
    code = _CODES[dtype if isinstance(dtype, str) else np.dtype(dtype)]
    data = np.ascontiguousarray(samples, dtype=_DTYPES[code]).reshape(-1)
    header = _HEADER.pack(QWF_MAGIC, QWF_VERSION, code, 0, float(sample_rate_hz), data.size)
    return header + data.tobytes()


def decode_qwf(blob, label=None):
    if len(blob) < _HEADER.size:
        raise BadMagic("file shorter than the QWF1 header")
    magic, version, code, _, rate, count = _HEADER.unpack_from(blob)
    if magic != QWF_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != QWF_VERSION:
        raise VersionMismatch(f"unsupported QWF version {version}")
    if code not in _DTYPES:
        raise ValueError(f"unknown dtype code {code}")
    dt = _DTYPES[code]
    need = _HEADER.size + count * dt.itemsize
    if len(blob) < need:
        raise ValueError(f"truncated QWF1 payload: need {need} bytes, have {len(blob)}")
    samples = np.frombuffer(blob, dtype=dt, count=count, offset=_HEADER.size)
    return QuadratureRecord(samples.astype(dt.newbyteorder("=")), rate, label)


def write_qwf(path, record, dtype="f32"):
    path = Path(path)
    path.write_bytes(encode_qwf(record.samples, record.sample_rate_hz, dtype))
    return path


def read_qwf(path):
    path = Path(path)
    return decode_qwf(path.read_bytes(), label=path.stem)


def write_calibration(path, cal):
    Path(path).write_text(json.dumps(cal.to_dict(), indent=2) + "\n")


def read_calibration(path):
    return LoCalibration.from_dict(json.loads(Path(path).read_text()))
