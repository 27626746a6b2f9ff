"""Input validation helpers shared by estimators and free functions."""

import numpy as np

from .exceptions import EmptyRecord, NonFiniteSample, ShapeMismatch


def as_samples(data, *, dtype=np.float64):
    """Return the 1-D sample array behind a record or array-like."""
    samples = getattr(data, "samples", data)
    arr = np.asarray(samples, dtype=dtype)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    return arr


def check_samples(data):
    """Samples as float64, rejecting empty input and NaN/Inf values."""
    arr = as_samples(data)
    if arr.size == 0:
        raise EmptyRecord("record has no samples")
    finite = np.isfinite(arr)
    if not finite.all():
        raise NonFiniteSample(int(np.argmin(finite)))
    return arr


def check_windows(X, window_len=None, *, dtype=np.float64):
    """Coerce a batch of windows to a 2-D (n_windows, window_len) array."""
    arr = np.asarray(X, dtype=dtype)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise ShapeMismatch(f"expected 2-D window batch, got shape {arr.shape}")
    if window_len is not None and arr.shape[0] and arr.shape[1] != window_len:
        raise ShapeMismatch(
            f"window length {arr.shape[1]} does not match model input {window_len}"
        )
    if arr.size and not np.isfinite(arr).all():
        flat = np.isfinite(arr).reshape(-1)
        raise NonFiniteSample(int(np.argmin(flat)))
    return arr
