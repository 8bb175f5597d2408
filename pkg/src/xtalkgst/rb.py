"""Simultaneous randomized-benchmarking analysis.

Each qubit is analysed in two contexts: with its neighbour idling
(``"idle"``) and with its neighbour driven by independent random gates
(``"driven"``).  Success is the per-qubit marginal probability of reading
that qubit's target bit; decays ``A + B p^d`` are fitted per cell and
converted to error per gate ``r = (1 - p) / 2``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .circuits import RBCircuit, parse, serialize
from .simulate import OUTCOMES, Dataset

CONTEXTS = ("idle", "driven")

# (qubit, context) -> RB mode that realizes it
_MODE_OF = {
    (0, "idle"): "q1-idle",
    (1, "idle"): "q0-idle",
    (0, "driven"): "simultaneous",
    (1, "driven"): "simultaneous",
}

__all__ = [
    "CONTEXTS",
    "DecayFit",
    "RBCell",
    "RBResult",
    "rb_success",
    "fit_decay",
    "error_per_gate",
    "analyze_rb",
    "context_variation_rb",
    "write_rb_metadata",
    "read_rb_metadata",
]


def error_per_gate(p: float, n_qubits: int = 1) -> float:
    """``r = (1 - p)(2^n - 1) / 2^n``."""
    dim = 2**n_qubits
    return (1.0 - p) * (dim - 1) / dim


def _marginal_success(counts: np.ndarray, qubit: int, bit: str) -> float:
    hits = sum(int(n) for o, n in zip(OUTCOMES, counts) if o[qubit] == bit)
    total = int(np.sum(counts))
    if total == 0:
        raise ValueError("RB circuit has no recorded shots")
    return hits / total


def rb_success(ds: Dataset, rb_circuits) -> dict:
    """Per-circuit marginal success grouped as ``{(qubit, context): {depth: array}}``."""
    out = {cell: {} for cell in _MODE_OF}
    missing = [serialize(rc.circuit) for rc in rb_circuits if rc.circuit not in ds]
    if missing:
        raise ValueError(f"{len(missing)} RB circuits are missing from the dataset, e.g. {missing[0]!r}")
    for rc in rb_circuits:
        counts = ds.counts[ds.index_of(rc.circuit)]
        for (q, ctx), mode in _MODE_OF.items():
            if rc.mode == mode:
                out[(q, ctx)].setdefault(rc.depth, []).append(_marginal_success(counts, q, rc.target[q]))
    return {cell: {d: np.array(v) for d, v in sorted(per.items())} for cell, per in out.items() if per}


def _decay(d, a, b, p):
    return a + b * np.power(p, d)


@dataclass(frozen=True)
class DecayFit:
    A: float
    B: float
    p: float
    halfwidths: dict

    @property
    def r(self) -> float:
        return error_per_gate(self.p)


def fit_decay(depths, successes, weights=None) -> DecayFit:
    """Weighted least-squares fit of ``A + B p^d``.

    Bounds are ``A in [0, 1]``, ``B in [-1, 1]``, ``p in [0, 1]``.  Half-widths
    are 1.96 standard errors from the scaled covariance, so multiplying all
    weights by a constant changes nothing.
    """
    depths = np.asarray(depths, dtype=float)
    y = np.asarray(successes, dtype=float)
    if depths.shape != y.shape:
        raise ValueError("depths and successes must have the same shape")
    if len(np.unique(depths)) < 3:
        raise ValueError("at least three distinct depths are needed")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    sigma = 1.0 / np.sqrt(w / w.max())
    # For fixed p the model is linear in (A, B); profile p on a grid to find a
    # starting point that works for either sign of B.
    sw = 1.0 / sigma
    best = None
    for p_try in 1.0 - np.geomspace(1e-6, 0.9, 400):
        design = np.column_stack([np.ones_like(depths), p_try**depths]) * sw[:, None]
        coef = np.linalg.lstsq(design, y * sw, rcond=None)[0]
        coef = np.clip(coef, [0.0, -1.0], [1.0, 1.0])
        cost = np.sum(((_decay(depths, coef[0], coef[1], p_try) - y) * sw) ** 2)
        if best is None or cost < best[0]:
            best = (cost, coef[0], coef[1], p_try)
    a0, b0, p0 = best[1:]
    popt, pcov = scipy.optimize.curve_fit(
        _decay, depths, y, p0=(a0, b0, p0), sigma=sigma, absolute_sigma=False,
        bounds=([0.0, -1.0, 0.0], [1.0, 1.0, 1.0]), method="trf", x_scale="jac",
        ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=10000,
    )
    err = np.sqrt(np.clip(np.diag(pcov), 0.0, None)) if np.all(np.isfinite(pcov)) else np.full(3, np.nan)
    hw = {"A": 1.96 * err[0], "B": 1.96 * err[1], "p": 1.96 * err[2], "r": 1.96 * err[2] / 2.0}
    return DecayFit(float(popt[0]), float(popt[1]), float(popt[2]), {k: float(v) for k, v in hw.items()})


def _cell_fit(per_depth: dict) -> DecayFit:
    # Depth means are fitted with equal weights.  Inverse sample-variance
    # weights from ~30 circuits per depth are noisy enough to undercover.
    depths = list(per_depth)
    means = [per_depth[d].mean() for d in depths]
    return fit_decay(depths, means)


@dataclass
class RBCell:
    qubit: int
    context: str
    fit: DecayFit
    r_halfwidth: float
    r_samples: np.ndarray
    successes: dict

    @property
    def r(self) -> float:
        return self.fit.r

    def to_dict(self) -> dict:
        return {
            "qubit": self.qubit,
            "context": self.context,
            "A": self.fit.A,
            "B": self.fit.B,
            "p": self.fit.p,
            "r": self.r,
            "halfwidths": {**self.fit.halfwidths, "r": self.r_halfwidth},
            "successes": {str(d): [float(x) for x in v] for d, v in self.successes.items()},
        }


@dataclass
class RBResult:
    cells: dict
    replicates: int
    seed: int
    diagnostics: dict = field(default_factory=dict)

    def __getitem__(self, key) -> RBCell:
        return self.cells[key]

    def to_dict(self) -> dict:
        return {
            "convention": "r = (1 - p) / 2 per qubit marginal",
            "bootstrap_replicates": self.replicates,
            "seed": self.seed,
            "cells": [self.cells[k].to_dict() for k in sorted(self.cells)],
            "context_variation": {
                str(q): dict(zip(("value", "halfwidth"), context_variation_rb(self, q)))
                for q in (0, 1) if (q, "idle") in self.cells and (q, "driven") in self.cells
            },
        }


def analyze_rb(ds: Dataset, rb_circuits, replicates: int = 200, seed: int = 0) -> RBResult:
    """Fit every (qubit, context) cell and bootstrap ``r`` by resampling circuits per depth."""
    if replicates < 20:
        raise ValueError("at least 20 bootstrap replicates are required")
    data = rb_success(ds, rb_circuits)
    rng = np.random.default_rng(seed)
    cells = {}
    failed = 0
    for key in sorted(data):
        per_depth = data[key]
        fit = _cell_fit(per_depth)
        samples = []
        for _ in range(replicates):
            boot = {d: v[rng.integers(0, len(v), len(v))] for d, v in per_depth.items()}
            try:
                samples.append(_cell_fit(boot).r)
            except (RuntimeError, ValueError):
                failed += 1
        samples = np.array(samples)
        lo, hi = np.percentile(samples, [2.5, 97.5])
        cells[key] = RBCell(key[0], key[1], fit, float(0.5 * (hi - lo)), samples, per_depth)
    return RBResult(cells, replicates, seed, {"failed_replicates": failed})


def context_variation_rb(res: RBResult, qubit: int):
    """``(r_driven - r_idle, halfwidth)`` with the half-width from paired bootstrap samples."""
    idle, driven = res.cells[(qubit, "idle")], res.cells[(qubit, "driven")]
    value = driven.r - idle.r
    n = min(len(idle.r_samples), len(driven.r_samples))
    diff = driven.r_samples[:n] - idle.r_samples[:n]
    lo, hi = np.percentile(diff, [2.5, 97.5])
    return float(value), float(0.5 * (hi - lo))


def write_rb_metadata(rb_circuits, path) -> None:
    """Sidecar JSON mapping each RB circuit to its mode, depth and target bits."""
    rows = [{"circuit": serialize(rc.circuit), "mode": rc.mode, "depth": rc.depth,
             "target": rc.target} for rc in rb_circuits]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"format": "xtalk-rb-metadata", "version": 1, "circuits": rows}, fh, indent=1)
        fh.write("\n")


def read_rb_metadata(path) -> list[RBCircuit]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "xtalk-rb-metadata":
        raise ValueError(f"{path} is not an RB metadata file")
    return [RBCircuit(parse(r["circuit"]), r["target"], r["mode"], int(r["depth"])) for r in doc["circuits"]]
