"""Semiclassical simulator of chaos-amplified quantum noise.

The signal field at sample ``t`` is a coherent amplitude plus a band-limited
complex Gaussian (thermal) component::

    v_t = sqrt(coherent_photon) + c * (h * g)_t

with ``g`` white circular Gaussian noise, ``h`` a 4th-order Butterworth
low-pass at ``bandwidth_frac`` of the sample rate and ``c`` chosen so the
thermal part carries ``thermal_photon`` photons on average.  An optional
slow gamma-distributed intensity envelope multiplies the thermal part and
pushes g2 above 2.

Homodyne detection against a local oscillator of ``n_lo`` photons with a
free-running phase gives::

    dI_t = 2 sqrt(n_lo) Re(exp(-i phi_t) v_t) + sqrt(n_lo) xi_t

Averaging over the uniform phase ``phi_t`` is what makes the moment
relations in :mod:`aqng2.homodyne` exact for the coherent part.
"""

from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import signal

from ._validation import check_samples
from .exceptions import InvalidBandwidth, SegmentTooLong, ZeroIntensity, ZeroPhotonNumber
from .homodyne import QuadratureRecord
from .seeding import SHOT_NOISE, derive_seed

FILTER_ORDER = 4
ENVELOPE_BANDWIDTH_RATIO = 0.1


@dataclass(frozen=True)
class AqnModel:
    coherent_photon: float = 0.0
    thermal_photon: float = 1.0
    bandwidth_frac: float = 0.25
    superbunch_k: float | None = None
    n_lo: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.coherent_photon < 0 or self.thermal_photon < 0:
            raise ValueError("photon numbers must be non-negative")
        if not 0 < self.bandwidth_frac <= 0.5:
            raise InvalidBandwidth(f"bandwidth_frac must lie in (0, 0.5], got {self.bandwidth_frac}")
        if self.superbunch_k is not None and not self.superbunch_k > 0:
            raise ValueError("superbunch_k must be positive when set")
        if not self.n_lo > 0:
            raise ValueError("n_lo must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise KeyError(f"unknown AqnModel field(s): {', '.join(sorted(unknown))}")
        return cls(**doc)

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


@dataclass
class FieldSeries:
    values: np.ndarray
    seed_used: int

    def __len__(self):
        return self.values.size


@lru_cache(maxsize=64)
def _lowpass(cutoff_frac):
    """SOS sections, impulse-response energy and warm-up length, or None for all-pass."""
    if cutoff_frac >= 0.5:
        return None
    sos = signal.butter(FILTER_ORDER, 2.0 * cutoff_frac, output="sos")
    warmup = int(np.ceil(20.0 / cutoff_frac))
    impulse = np.zeros(max(4 * warmup, 4096))
    impulse[0] = 1.0
    h = signal.sosfilt(sos, impulse)
    return sos, float(np.sum(h * h)), warmup


def _filtered(x, cutoff_frac):
    spec = _lowpass(cutoff_frac)
    if spec is None:
        return x
    sos, _, warmup = spec
    return signal.sosfilt(sos, x)[warmup:]


def _filter_warmup(cutoff_frac):
    spec = _lowpass(cutoff_frac)
    return 0 if spec is None else spec[2]


def filter_energy(cutoff_frac):
    """Sum of squared impulse-response taps (1 for the all-pass case)."""
    spec = _lowpass(cutoff_frac)
    return 1.0 if spec is None else spec[1]


def simulate_field(model, n):
    """Complex signal-field amplitudes, photon-number normalised."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(model.seed)
    alpha = np.sqrt(model.coherent_photon)
    if model.thermal_photon == 0:
        return FieldSeries(np.full(n, alpha, dtype=np.complex128), model.seed)

    bw = model.bandwidth_frac
    total = n + _filter_warmup(bw)
    re = _filtered(rng.standard_normal(total), bw)
    im = _filtered(rng.standard_normal(total), bw)
    scale = np.sqrt(model.thermal_photon / (2.0 * filter_energy(bw)))
    thermal = scale * (re + 1j * im)

    if model.superbunch_k is not None:
        k = model.superbunch_k
        env_bw = bw * ENVELOPE_BANDWIDTH_RATIO
        raw = rng.gamma(k, 1.0 / k, n + _filter_warmup(env_bw))
        envelope = np.clip(_filtered(raw, env_bw), 0.0, None)
        thermal *= np.sqrt(envelope)

    return FieldSeries(alpha + thermal, model.seed)


def analytic_g2(model):
    """Displaced-thermal g2(0); ``None`` when the super-bunch envelope is on."""
    c, t = model.coherent_photon, model.thermal_photon
    if c + t == 0:
        raise ZeroPhotonNumber("coherent_photon and thermal_photon are both zero")
    if model.superbunch_k is not None:
        return None
    return 1.0 + (t * t + 2.0 * c * t) / (c + t) ** 2


def envelope_variance(model):
    """Stationary variance of the filtered gamma envelope (clipping ignored)."""
    if model.superbunch_k is None:
        return 0.0
    env_bw = model.bandwidth_frac * ENVELOPE_BANDWIDTH_RATIO
    return filter_energy(env_bw) / model.superbunch_k


def oracle_g2(model):
    """Ground-truth g2(0) for any model.

    Equals :func:`analytic_g2` without an envelope.  With the envelope ``E``
    (unit mean, independent of the thermal noise) the intensity moments give
    ``(c^2 + 4 c t + 2 t^2 E[E^2]) / (c + t)^2``; negative envelope samples
    are clipped in the simulator, which this formula neglects.
    """
    c, t = model.coherent_photon, model.thermal_photon
    if c + t == 0:
        raise ZeroPhotonNumber("coherent_photon and thermal_photon are both zero")
    second = 1.0 + envelope_variance(model)
    return (c * c + 4.0 * c * t + 2.0 * t * t * second) / (c + t) ** 2


def empirical_field_g2(field):
    values = getattr(field, "values", field)
    intensity = np.abs(np.asarray(values)) ** 2
    if intensity.size == 0:
        raise ZeroIntensity("empty field")
    mean = intensity.mean()
    if mean <= 0:
        raise ZeroIntensity("field has zero mean intensity")
    return float(np.mean(intensity * intensity) / mean**2)


def field_to_current(field, n_lo, seed, phase=None, sample_rate_hz=1.0, label=None):
    """Difference photocurrent for a field; ``phase=None`` draws a uniform phase per sample.

    A fixed ``phase`` breaks the phase-averaging assumption and is only
    useful to demonstrate it.
    """
    values = np.asarray(getattr(field, "values", field))
    if values.size == 0:
        raise ValueError("field is empty")
    rng = np.random.default_rng(seed)
    if phase is None:
        phi = rng.uniform(0.0, 2.0 * np.pi, values.size)
    else:
        phi = np.full(values.size, float(phase))
        rng.uniform(size=values.size)  # keep the shot-noise stream aligned
    xi = rng.standard_normal(values.size)
    root = np.sqrt(n_lo)
    current = 2.0 * root * (values.real * np.cos(phi) + values.imag * np.sin(phi)) + root * xi
    return QuadratureRecord(current, sample_rate_hz, label)


def simulate_vacuum(n_lo, n, seed, sample_rate_hz=1.0):
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return QuadratureRecord(np.sqrt(n_lo) * rng.standard_normal(n), sample_rate_hz, "vacuum")


def simulate_record(model, n, sample_rate_hz=1.0, label=None):
    """Field plus homodyne detection in one call, seeds split from ``model.seed``."""
    field = simulate_field(model, n)
    return field_to_current(
        field, model.n_lo, derive_seed(model.seed, SHOT_NOISE), sample_rate_hz=sample_rate_hz, label=label
    )


def estimate_psd(record, segment_len):
    """Welch PSD: Hann segments with 50 % overlap, one-sided density.

    Returns ``(frequency_hz, power)`` arrays; ``power.sum() * df`` recovers
    the record variance.
    """
    x = check_samples(record)
    seg = int(segment_len)
    if seg < 2 or seg & (seg - 1):
        raise ValueError(f"segment_len must be a power of two, got {segment_len}")
    if seg > x.size:
        raise SegmentTooLong(f"segment_len {seg} exceeds record length {x.size}")
    fs = getattr(record, "sample_rate_hz", 1.0)
    return signal.welch(
        x, fs=fs, window="hann", nperseg=seg, noverlap=seg // 2,
        detrend="constant", scaling="density", return_onesided=True,
    )


def effective_bandwidth(freqs, power, fraction=0.8):
    """Frequency below which ``fraction`` of the spectral power lies."""
    cum = np.cumsum(power)
    cum /= cum[-1]
    return float(np.interp(fraction, cum, freqs))


def cutoff_to_effective_bandwidth(bandwidth_frac, sample_rate_hz=1.0, fraction=0.8, n_points=1 << 14):
    """80 %-power bandwidth of the thermal filter, in Hz."""
    freqs = np.linspace(0.0, 0.5, n_points)
    spec = _lowpass(bandwidth_frac)
    if spec is None:
        power = np.ones_like(freqs)
    else:
        _, h = signal.sosfreqz(spec[0], worN=2.0 * np.pi * freqs)
        power = np.abs(h) ** 2
    return effective_bandwidth(freqs, power, fraction) * sample_rate_hz
