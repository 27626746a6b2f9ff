"""g2(0) of amplified quantum noise from balanced homodyne quadrature records."""

from .homodyne import (
    G2Estimate,
    LoCalibration,
    Method,
    MomentG2Estimator,
    MomentSet,
    PhotonStatistics,
    QuadratureRecord,
    accumulate_moments,
    calibrate_lo,
    g2_block_bootstrap,
    g2_from_moments,
    mean_photon_number,
    merge_moments,
    normally_ordered_second,
    photon_statistics,
)
from .io import read_calibration, read_qwf, write_calibration, write_qwf
from .simulation import (
    AqnModel,
    analytic_g2,
    estimate_psd,
    oracle_g2,
    simulate_field,
    simulate_record,
    simulate_vacuum,
)

__version__ = "0.1.0"

__all__ = [
    "AqnModel",
    "G2Estimate",
    "LoCalibration",
    "Method",
    "MomentG2Estimator",
    "MomentSet",
    "PhotonStatistics",
    "QuadratureRecord",
    "accumulate_moments",
    "analytic_g2",
    "calibrate_lo",
    "estimate_psd",
    "g2_block_bootstrap",
    "g2_from_moments",
    "mean_photon_number",
    "merge_moments",
    "normally_ordered_second",
    "oracle_g2",
    "photon_statistics",
    "read_calibration",
    "read_qwf",
    "simulate_field",
    "simulate_record",
    "simulate_vacuum",
    "write_calibration",
    "write_qwf",
]
