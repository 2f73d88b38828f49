"""Calibrated constants for the pipelines and the verification harness.

The shipped values live in ``data/calibration.json`` and were produced by
``sketchbench calibrate``.  :data:`DEFAULTS` is the fallback used when a
key is missing from the file.
"""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

DEFAULTS = {
    # fast OSE chain
    "chain_c1": 2.0,          # stage-1 rows: ceil(d^(1+gamma) log2 d) * c1
    "chain_c2": 4.0,          # stage-2 rows: ceil(d log2 d) * c2, next power of two
    "chain_theta": 7.0,       # stage-3 rows: ceil((1 + theta) d)
    "chain_c3": 1.0,          # stage-3 sparsity: p*m3 = ceil(c3 log2^4(d/delta)), capped at m3
    "chain_beta1": 16.0,      # uniform post-RHT scores are treated as (16, 1)-approximate
    "lowbits_theta": 7.0,
    # direct sketches at the O(d/eps^2) operating point
    "ose_c1": 2.0,            # m = ceil(c1 d / eps^2)
    "ose_c2": 0.011,          # p*m = ceil(c2 log2^4(d/delta)), capped at m
    # fast low-distortion embedding
    "lowdist_c": 4.0,         # m = ceil(c d / eps^2)
    "lowdist_beta1": 4.0,     # score multiplier for the LESS stage
    "lowdist_c2": 0.011,      # p*m = ceil(c2 log2^4(d/delta) (0.5/eps)^4), capped at m
    # regression
    "reduce_c": 0.1,          # m = ceil(c (d+1) / eps^2), capped at n
    "sgd_c_T": 100.0,         # iterations T = ceil(c_T / eps)
    "sgd_theta": 3.0,         # stage-3 oversampling of the preconditioning sketch
    # universality
    "universality_C": 0.15,   # percentile(d_H) <= C * zeta(log(2d/0.05))
}


@lru_cache(maxsize=1)
def _file_constants() -> dict:
    try:
        text = resources.files("sketchbench").joinpath("data/calibration.json").read_text()
    except (FileNotFoundError, OSError):
        return {}
    return dict(json.loads(text).get("constants", {}))


def constant(name: str) -> float:
    consts = _file_constants()
    if name in consts:
        return float(consts[name])
    if name in DEFAULTS:
        return float(DEFAULTS[name])
    raise KeyError(f"unknown calibration constant {name!r}")


def all_constants() -> dict:
    out = dict(DEFAULTS)
    out.update(_file_constants())
    return out


def save_constants(values: dict, path=None) -> None:
    """Write ``values`` over the shipped constants file (or ``path``)."""
    from pathlib import Path
    target = Path(path) if path else Path(__file__).with_name("data") / "calibration.json"
    merged = dict(_file_constants()) if path is None else {}
    merged.update({k: float(v) for k, v in values.items()})
    target.write_text(json.dumps({"schema": 1, "constants": dict(sorted(merged.items()))},
                                 indent=2) + "\n")
    _file_constants.cache_clear()


def first_passing(candidates, success, target: float = 0.95):
    """Return ``(candidate, rate)`` for the first candidate reaching ``target``.

    ``candidates`` must be ordered from cheapest (smallest ``m``) upward;
    ``success(candidate)`` returns an empirical success rate.
    """
    rates = []
    for cand in candidates:
        rate = float(success(cand))
        rates.append((cand, rate))
        if rate >= target:
            return cand, rate, rates
    return None, None, rates
