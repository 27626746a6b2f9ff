"""Measurement data model and the moment-inversion chain for g2(0).

A balanced homodyne record is a sequence of difference-photocurrent
samples.  Its second and fourth central moments, referenced to the local
oscillator scale ``n_lo`` (the variance of a vacuum record), determine the
mean photon number, the normally ordered second moment and g2(0) of the
signal field::

    <a^+ a>         = (m2 / n_lo - 1) / 2
    <a^+ a^+ a a>   = m4 / (6 n_lo^2) - m2 / n_lo + 1/2
    g2(0)           = (2/3 m4 - 4 n_lo m2 + 2 n_lo^2) / (m2 - n_lo)^2

The relations assume the relative LO phase is uniformly averaged.  Moments
are always taken about the sample mean so that a residual DC imbalance of
the detector does not leak into the estimate.
"""

from dataclasses import dataclass, field
from enum import Enum
from math import comb

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_samples, check_windows
from .exceptions import RecordTooShort, SignalTooWeak, TooFewBlocks, ZeroVariance

MAX_ORDER = 8
DEFAULT_MIN_CALIBRATION_SAMPLES = 10_000
DEFAULT_SIGNAL_FLOOR = 1e-3
_CHUNK = 1 << 16


class Method(str, Enum):
    MOMENT = "moment"
    PCCNN = "pccnn"
    RF = "rf"
    SVR = "svr"


@dataclass
class QuadratureRecord:
    """Difference-photocurrent samples plus acquisition metadata."""

    samples: np.ndarray
    sample_rate_hz: float = 1.0
    label: str | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 1:
            self.samples = self.samples.reshape(-1)
        if self.samples.dtype not in (np.float32, np.float64):
            self.samples = self.samples.astype(np.float64)
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")

    def __len__(self):
        return self.samples.size

    def scaled(self, factor):
        return QuadratureRecord(self.samples * factor, self.sample_rate_hz, self.label)


@dataclass(frozen=True)
class LoCalibration:
    n_lo: float
    mean_offset: float
    n_samples_used: int

    def __post_init__(self):
        if not self.n_lo > 0:
            raise ValueError("n_lo must be positive")
        if self.n_samples_used < 1:
            raise ValueError("n_samples_used must be positive")

    def to_dict(self):
        return {
            "n_lo": float(self.n_lo),
            "mean_offset": float(self.mean_offset),
            "n_samples_used": int(self.n_samples_used),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(float(doc["n_lo"]), float(doc["mean_offset"]), int(doc["n_samples_used"]))


@dataclass(frozen=True)
class MomentSet:
    """Mergeable central-moment statistics of a sample stream.

    ``sums[p - 2]`` holds the central power sum ``sum((x - mean) ** p)`` for
    ``p = 2..MAX_ORDER``.  Orders above four feed the standard error of g2;
    sets built by hand from (m2, m4) alone carry NaN there.
    """

    count: int
    mean: float
    sums: tuple = field(default=(0.0,) * (MAX_ORDER - 1))

    @classmethod
    def empty(cls):
        return cls(0, 0.0)

    @classmethod
    def from_moments(cls, count, mean, m2, m4, m3=0.0):
        nan = float("nan")
        sums = (m2 * count, m3 * count, m4 * count) + (nan,) * (MAX_ORDER - 4)
        return cls(int(count), float(mean), sums)

    def central(self, order):
        """Central moment ``E[(x - mean)^order]`` (population normalisation)."""
        if order == 0:
            return 1.0
        if order == 1:
            return 0.0
        if self.count == 0:
            return 0.0
        return self.sums[order - 2] / self.count

    @property
    def m2(self):
        return self.central(2)

    @property
    def m3(self):
        return self.central(3)

    @property
    def m4(self):
        return self.central(4)


def _chunk_moments(x):
    n = x.size
    mean = float(x.mean())
    d = x - mean
    p = d * d
    sums = [float(p.sum())]
    for _ in range(3, MAX_ORDER + 1):
        p *= d
        sums.append(float(p.sum()))
    return MomentSet(n, mean, tuple(sums))


def merge_moments(a, b):
    """Combine two moment sets as if their samples had been concatenated.

    Uses the arbitrary-order pairwise update of Pebay (2008).
    """
    if a.count == 0:
        return b
    if b.count == 0:
        return a
    na, nb = a.count, b.count
    n = na + nb
    delta = b.mean - a.mean
    mean = a.mean + delta * nb / n

    def sa(p):
        return na if p == 0 else (0.0 if p == 1 else a.sums[p - 2])

    def sb(p):
        return nb if p == 0 else (0.0 if p == 1 else b.sums[p - 2])

    sums = []
    for p in range(2, MAX_ORDER + 1):
        total = a.sums[p - 2] + b.sums[p - 2]
        for k in range(1, p - 1):
            total += comb(p, k) * delta**k * (
                (-nb / n) ** k * sa(p - k) + (na / n) ** k * sb(p - k)
            )
        total += (na * nb * delta / n) ** p * (1.0 / nb ** (p - 1) - (-1.0 / na) ** (p - 1))
        sums.append(total)
    return MomentSet(n, mean, tuple(sums))


def accumulate_moments(record, chunk_size=_CHUNK):
    """Streaming central moments of a record, chunk by chunk in input order."""
    x = check_samples(record)
    result = MomentSet.empty()
    for start in range(0, x.size, chunk_size):
        result = merge_moments(result, _chunk_moments(x[start : start + chunk_size]))
    return result


def calibrate_lo(vacuum_record, min_samples=DEFAULT_MIN_CALIBRATION_SAMPLES):
    """LO photon-number scale from a record taken with the signal port blocked."""
    x = check_samples(vacuum_record)
    if x.size < min_samples:
        raise RecordTooShort(f"calibration needs >= {min_samples} samples, got {x.size}")
    m = accumulate_moments(x)
    if not m.m2 > 1e-14 * max(1.0, m.mean**2):
        raise ZeroVariance("vacuum record has zero variance (degenerate or clipped)")
    return LoCalibration(n_lo=m.m2, mean_offset=m.mean, n_samples_used=m.count)


@dataclass(frozen=True)
class PhotonStatistics:
    mean_photon: float
    second_order: float
    flagged: bool = False


@dataclass(frozen=True)
class G2Estimate:
    value: float
    std_error: float
    n_samples: int
    method: Method = Method.MOMENT


def mean_photon_number(m, cal):
    return 0.5 * (m.m2 / cal.n_lo - 1.0)


def normally_ordered_second(m, cal):
    return m.m4 / (6.0 * cal.n_lo**2) - m.m2 / cal.n_lo + 0.5


def photon_statistics(m, cal):
    """Both photon-number moments; flags a mean photon number below -3 sigma."""
    mean_photon = mean_photon_number(m, cal)
    flagged = False
    if m.count > 1:
        var_m2 = max(m.m4 - m.m2**2, 0.0) / m.count
        se = 0.5 * np.sqrt(var_m2) / cal.n_lo
        flagged = bool(mean_photon < -3.0 * se)
    return PhotonStatistics(mean_photon, normally_ordered_second(m, cal), flagged)


def _moment_cov(m, r, s):
    """Asymptotic n * Cov(sample m_r, sample m_s) for central moments."""
    mu = m.central
    return (
        mu(r + s)
        - mu(r) * mu(s)
        - r * mu(r - 1) * mu(s + 1)
        - s * mu(r + 1) * mu(s - 1)
        + r * s * mu(2) * mu(r - 1) * mu(s - 1)
    )


def _g2_value(m2, m4, n_lo):
    return (2.0 / 3.0 * m4 - 4.0 * n_lo * m2 + 2.0 * n_lo**2) / (m2 - n_lo) ** 2


def _delta_std_error(m, cal):
    n = cal.n_lo
    excess = m.m2 - n
    numer = 2.0 / 3.0 * m.m4 - 4.0 * n * m.m2 + 2.0 * n**2
    d_m4 = (2.0 / 3.0) / excess**2
    d_m2 = -4.0 * n / excess**2 - 2.0 * numer / excess**3
    d_n = (4.0 * n - 4.0 * m.m2) / excess**2 + 2.0 * numer / excess**3
    var = (
        d_m2**2 * _moment_cov(m, 2, 2)
        + 2.0 * d_m2 * d_m4 * _moment_cov(m, 2, 4)
        + d_m4**2 * _moment_cov(m, 4, 4)
    ) / m.count
    # vacuum calibration treated as Gaussian: Var(n_lo) = 2 n_lo^2 / N
    var += d_n**2 * 2.0 * n**2 / cal.n_samples_used
    return float(np.sqrt(var)) if var >= 0 else float("nan")


def g2_from_moments(m, cal, signal_floor=DEFAULT_SIGNAL_FLOOR):
    """g2(0) with a first-order (delta-method) standard error.

    The error assumes independent samples and treats the calibration as a
    Gaussian vacuum record; use :func:`g2_block_bootstrap` for band-limited
    (serially correlated) records.  Raises :class:`SignalTooWeak` when
    ``|m2 - n_lo|`` is below ``signal_floor * n_lo``.
    """
    if abs(m.m2 - cal.n_lo) < signal_floor * cal.n_lo:
        raise SignalTooWeak(
            f"excess variance {m.m2 - cal.n_lo:.3g} below floor {signal_floor * cal.n_lo:.3g}"
        )
    value = _g2_value(m.m2, m.m4, cal.n_lo)
    se = _delta_std_error(m, cal) if m.count > 1 else float("nan")
    return G2Estimate(float(value), se, int(m.count), Method.MOMENT)


def _block_sums(x, n_blocks):
    size = x.size // n_blocks
    blocks = x[: size * n_blocks].reshape(n_blocks, size)
    means = blocks.mean(axis=1)
    d = blocks - means[:, None]
    d2 = d * d
    return size, means, d2.sum(axis=1), (d2 * d).sum(axis=1), (d2 * d2).sum(axis=1)


def g2_block_bootstrap(
    record,
    cal,
    n_blocks=100,
    n_resamples=200,
    seed=0,
    signal_floor=DEFAULT_SIGNAL_FLOOR,
):
    """Point estimate from the full record, error from a block bootstrap.

    The record is cut into ``n_blocks`` contiguous blocks of equal length;
    trailing samples that do not fill a block are used for the point
    estimate only.
    """
    if n_blocks < 10:
        raise TooFewBlocks(f"need at least 10 blocks, got {n_blocks}")
    x = check_samples(record)
    if x.size < n_blocks * 2:
        raise RecordTooShort(f"{x.size} samples cannot fill {n_blocks} blocks")
    point = g2_from_moments(accumulate_moments(x), cal, signal_floor)

    size, means, s2, s3, s4 = _block_sums(x, n_blocks)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n_blocks, size=(n_resamples, n_blocks))
    bm = means[idx]
    grand = bm.mean(axis=1, keepdims=True)
    d = bm - grand
    total = size * n_blocks
    m2 = (s2[idx] + size * d**2).sum(axis=1) / total
    m4 = (s4[idx] + 4.0 * s3[idx] * d + 6.0 * s2[idx] * d**2 + size * d**4).sum(axis=1) / total
    n = cal.n_lo
    valid = np.abs(m2 - n) >= signal_floor * n
    values = _g2_value(m2[valid], m4[valid], n)
    se = float(values.std(ddof=1)) if values.size > 1 else float("nan")
    return G2Estimate(point.value, se, point.n_samples, Method.MOMENT)


class MomentG2Estimator(RegressorMixin, BaseEstimator):
    """Moment-based g2(0) per window, as an estimator.

    ``fit`` takes vacuum (shot-noise) data and stores the LO calibration;
    ``predict`` returns one g2 value per row of ``X``.  Rows whose excess
    variance is below the signal floor come back as NaN.
    """

    def __init__(self, signal_floor=DEFAULT_SIGNAL_FLOOR, min_calibration_samples=DEFAULT_MIN_CALIBRATION_SAMPLES):
        self.signal_floor = signal_floor
        self.min_calibration_samples = min_calibration_samples

    def fit(self, X, y=None):
        self.calibration_ = calibrate_lo(np.ravel(X), self.min_calibration_samples)
        return self

    @classmethod
    def from_calibration(cls, cal, **params):
        est = cls(**params)
        est.calibration_ = cal
        return est

    def predict(self, X):
        check_is_fitted(self, "calibration_")
        X = check_windows(X)
        out = np.full(X.shape[0], np.nan)
        for i, row in enumerate(X):
            try:
                out[i] = g2_from_moments(accumulate_moments(row), self.calibration_, self.signal_floor).value
            except SignalTooWeak:
                pass
        return out
