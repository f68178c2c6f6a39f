"""JSON exchange format shared with the reference (oracle) component.

Complex arrays are stored row-major as nested lists of [re, im] pairs.
This module is the single place that owns the numeric conventions so that
instance hashes computed here and by the oracle agree.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .scene import ChannelSet

__all__ = [
    "complex_to_pairs",
    "pairs_to_complex",
    "channelset_to_dict",
    "channelset_from_dict",
    "instance_to_dict",
    "instance_from_dict",
    "canonical_json",
    "instance_hash",
]


def complex_to_pairs(arr: np.ndarray) -> list:
    """Nested [re, im] lists, row-major."""
    arr = np.asarray(arr, dtype=complex)
    stacked = np.stack([arr.real, arr.imag], axis=-1)
    return stacked.tolist()


def pairs_to_complex(data) -> np.ndarray:
    a = np.asarray(data, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def channelset_to_dict(cs: ChannelSet) -> dict:
    d = {
        "dims": {"n": cs.n, "k": cs.k, "m": cs.m},
        "seed": cs.seed,
        "H": complex_to_pairs(cs.H),
        "G": complex_to_pairs(cs.G),
        "F": complex_to_pairs(cs.F),
    }
    if cs.delta_h or cs.delta_g or cs.delta_f:
        d["H_est"] = complex_to_pairs(cs.H_est)
        d["G_est"] = complex_to_pairs(cs.G_est)
        d["F_est"] = complex_to_pairs(cs.F_est)
        d["delta_h"] = cs.delta_h
        d["delta_g"] = cs.delta_g
        d["delta_f"] = cs.delta_f
    return d


def channelset_from_dict(d: dict) -> ChannelSet:
    kwargs = dict(
        H=pairs_to_complex(d["H"]),
        G=pairs_to_complex(d["G"]),
        F=pairs_to_complex(d["F"]),
        seed=d.get("seed"),
    )
    if "H_est" in d:
        kwargs.update(
            H_est=pairs_to_complex(d["H_est"]),
            G_est=pairs_to_complex(d["G_est"]),
            F_est=pairs_to_complex(d["F_est"]),
            delta_h=d.get("delta_h", 0.0),
            delta_g=d.get("delta_g", 0.0),
            delta_f=d.get("delta_f", 0.0),
        )
    return ChannelSet(**kwargs)


def instance_to_dict(cs: ChannelSet, phases: np.ndarray, *, gamma_db: float,
                     r_db: float | None = None, p_budget_mw: float | None = None,
                     order: int = 4, sigma_c2: float = 1.0, sigma_r2: float = 1.0,
                     p_r: float = 1.0, seed: int | None = None) -> dict:
    """One solvable problem instance: channels plus a single symbol slot."""
    inst = {
        "channels": channelset_to_dict(cs),
        "phases": np.asarray(phases, dtype=float).tolist(),
        "order": order,
        "gamma_db": gamma_db,
        "sigma_c2": sigma_c2,
        "sigma_r2": sigma_r2,
        "p_r": p_r,
    }
    if r_db is not None:
        inst["r_db"] = r_db
    if p_budget_mw is not None:
        inst["p_budget_mw"] = p_budget_mw
    if seed is not None:
        inst["seed"] = seed
    return inst


def instance_from_dict(inst: dict):
    """Returns (ChannelSet, phases array, params dict)."""
    cs = channelset_from_dict(inst["channels"])
    phases = np.asarray(inst["phases"], dtype=float)
    params = {k: inst[k] for k in
              ("order", "gamma_db", "sigma_c2", "sigma_r2", "p_r")}
    for k in ("r_db", "p_budget_mw", "seed"):
        if k in inst:
            params[k] = inst[k]
    return cs, phases, params


def canonical_json(obj) -> str:
    """Deterministic JSON used for hashing: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def instance_hash(inst: dict) -> str:
    return hashlib.sha256(canonical_json(inst).encode()).hexdigest()
