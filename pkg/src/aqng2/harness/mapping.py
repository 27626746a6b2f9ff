"""Translate laboratory knobs (feedback %, bias mA, injection uW, bandwidth GHz) into AqnModel fields."""

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
from scipy.optimize import brentq

from ..exceptions import MappingDomainError
from ..simulation import AqnModel, cutoff_to_effective_bandwidth

_MODE_ORDER = {"set": 0, "ratio": 0, "effective_bandwidth": 0, "scale": 1}


def default_mapping():
    text = resources.files("aqng2.harness").joinpath("data/mapping.json").read_text()
    return json.loads(text)


def _check_table(name, x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2 or x.size != y.size:
        raise ValueError(f"mapping {name!r}: x and y need the same length >= 2")
    if np.any(np.diff(x) <= 0):
        raise ValueError(f"mapping {name!r}: x must be strictly increasing")
    dy = np.diff(y)
    if not (np.all(dy >= 0) or np.all(dy <= 0)):
        raise ValueError(f"mapping {name!r}: table is not monotone")
    return x, y


def _lookup(name, x, y, value):
    if not x[0] <= value <= x[-1]:
        raise MappingDomainError(f"{name}={value} outside the mapped range [{x[0]}, {x[-1]}]")
    return float(np.interp(value, x, y))


def bandwidth_frac_for(effective_hz, sample_rate_hz):
    """Filter cutoff (fraction of the sample rate) with the requested 80 % bandwidth."""
    lo, hi = 1e-3, 0.499

    def gap(frac):
        return cutoff_to_effective_bandwidth(frac, sample_rate_hz) - effective_hz

    if not gap(lo) <= 0 <= gap(hi):
        raise MappingDomainError(f"effective bandwidth {effective_hz:.4g} Hz not reachable at this sample rate")
    return float(brentq(gap, lo, hi, xtol=1e-9))


def apply_mapping(template, knobs, mapping=None):
    """AqnModel for one grid cell; ``knobs`` maps axis names to values.

    Axis names that are AqnModel fields are assigned directly.  Table
    knobs in mode ``set`` replace a field, ``ratio`` sets it to the value
    times ``coherent_photon``, and ``scale`` multiplies it afterwards.
    """
    mapping = default_mapping() if mapping is None else mapping
    tables = mapping.get("knobs", {})
    values = template.to_dict()
    ordered = sorted(knobs.items(), key=lambda kv: _MODE_ORDER.get(tables.get(kv[0], {}).get("mode"), -1))
    for name, value in ordered:
        if name in values and name not in tables:
            values[name] = value
            continue
        if name not in tables:
            raise MappingDomainError(f"no mapping for knob {name!r}")
        spec = tables[name]
        target, mode = spec["field"], spec["mode"]
        if mode == "effective_bandwidth":
            values[target] = bandwidth_frac_for(value * 1e9, mapping["sample_rate_hz"])
            continue
        mapped = _lookup(name, *_check_table(name, spec["x"], spec["y"]), value)
        if mode == "set":
            values[target] = mapped
        elif mode == "ratio":
            values[target] = mapped * values["coherent_photon"]
        elif mode == "scale":
            values[target] = values[target] * mapped
        else:
            raise ValueError(f"unknown mapping mode {mode!r}")

    rule = mapping.get("superbunch")
    if rule and all(k in knobs for k in rule["when"]):
        if all(knobs[k] >= threshold for k, threshold in rule["when"].items()):
            x, k = _check_table("superbunch", rule["x"], rule["k"])
            values["superbunch_k"] = _lookup(rule["knob"], x, k, knobs[rule["knob"]])
    return AqnModel(**values)


@dataclass
class SweepGrid:
    axis1: tuple
    axis2: tuple
    model_template: AqnModel = field(default_factory=AqnModel)
    mapping: dict = field(default_factory=default_mapping)

    def __post_init__(self):
        if self.axis1[0] == self.axis2[0]:
            raise ValueError("the two sweep axes must differ")
        for name, vals in (self.axis1, self.axis2):
            if np.any(np.diff(np.asarray(vals, float)) <= 0):
                raise ValueError(f"axis {name!r} values must be strictly increasing")

    @classmethod
    def from_dict(cls, doc):
        template = AqnModel.from_dict(doc.get("model", {}))
        mapping = default_mapping()
        if "mapping" in doc:
            mapping = {**mapping, **doc["mapping"]}
        try:
            ax = [(doc[k]["name"], tuple(float(v) for v in doc[k]["values"])) for k in ("axis1", "axis2")]
        except KeyError as exc:
            raise KeyError(f"sweep grid is missing {exc}") from None
        return cls(ax[0], ax[1], template, mapping)

    def cells(self):
        """Yield ``(i, j, knobs, model)`` in row-major order."""
        (n1, v1), (n2, v2) = self.axis1, self.axis2
        for i, a in enumerate(v1):
            for j, b in enumerate(v2):
                knobs = {n1: a, n2: b}
                yield i, j, knobs, apply_mapping(self.model_template, knobs, self.mapping)

    def with_template(self, **changes):
        return replace(self, model_template=replace(self.model_template, **changes))
