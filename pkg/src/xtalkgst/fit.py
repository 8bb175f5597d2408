"""Maximum-likelihood fitting of the model families.

Objective values are in units of ``lambda`` (twice the negative log-likelihood
ratio against the maximal model).  Probabilities below ``P_FLOOR`` are
continued quadratically and pay a barrier term, so the objective stays smooth
while CP is only softly enforced; reported likelihoods use hard clipping.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from . import models, superop
from .engine import CircuitBatch
from .models import FAMILIES, GateSetModel
from .simulate import Dataset, clip_probabilities, sample_from_probabilities

log = logging.getLogger(__name__)

P_FLOOR = 1e-6
# Width of the quadratic barrier below P_FLOOR: a probability ``P_BARRIER``
# under the floor costs ``N * P_BARRIER`` in lambda units.
P_BARRIER = 1e-4

__all__ = [
    "FitConfig",
    "FitResult",
    "Objective",
    "loglikelihood",
    "max_loglikelihood",
    "per_circuit_llr",
    "wilks_k",
    "mle_fit",
    "fit_nested",
    "bootstrap",
    "bootstrap_ci",
    "format_uncertainty",
]


@dataclass
class FitConfig:
    max_iter: int = 3000
    chi2_max_iter: int = 300
    gtol: float = 1e-6
    ftol: float = 1e-14
    cp_weights: tuple = (1e1, 1e2, 1e3)
    cp_tol: float = 1e-3
    seed: int = 0
    starts: int = 3
    perturb_scale: float = 1e-3
    bootstrap_replicates: int = 20
    stall_window: int = 100
    stall_tol: float = 1e-2

    def __post_init__(self):
        if self.gtol <= 0 or self.ftol <= 0 or self.cp_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter <= 0 or self.starts <= 0:
            raise ValueError("iteration counts must be positive")

    def to_dict(self) -> dict:
        return {
            "max_iter": self.max_iter,
            "chi2_max_iter": self.chi2_max_iter,
            "gtol": self.gtol,
            "ftol": self.ftol,
            "cp_weights": list(self.cp_weights),
            "cp_tol": self.cp_tol,
            "seed": self.seed,
            "starts": self.starts,
            "perturb_scale": self.perturb_scale,
            "bootstrap_replicates": self.bootstrap_replicates,
            "stall_window": self.stall_window,
            "stall_tol": self.stall_tol,
            "optimizer": "L-BFGS-B, chi2 stage then log-likelihood stage",
            "cp_handling": "quadratic penalty on negative Choi/SPAM eigenvalues",
        }


@dataclass
class FitResult:
    model: GateSetModel
    loglikelihood: float
    lam: float
    k: int
    n_sigma: float
    per_circuit_llr: np.ndarray
    circuit_keys: list
    diagnostics: dict = field(default_factory=dict)

    @property
    def family(self) -> str:
        return self.model.family

    @property
    def n_params(self) -> int:
        return self.model.n_params

    @property
    def converged(self) -> bool:
        return bool(self.diagnostics.get("converged", False))

    def llr_map(self) -> dict:
        return dict(zip(self.circuit_keys, (float(x) for x in self.per_circuit_llr)))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n_params": self.n_params,
            "loglikelihood": float(self.loglikelihood),
            "lambda": float(self.lam),
            "k": int(self.k),
            "n_sigma": float(self.n_sigma),
            "diagnostics": self.diagnostics,
        }


# --- likelihood -------------------------------------------------------------

def _xlogy(n, p):
    return np.where(n > 0, n * np.log(np.where(n > 0, p, 1.0)), 0.0)


def max_loglikelihood(ds: Dataset) -> float:
    """``sum N f log f`` with ``0 log 0 = 0``."""
    return float(np.sum(_xlogy(ds.counts, ds.frequencies)))


def per_circuit_llr(probs: np.ndarray, ds: Dataset) -> np.ndarray:
    """``2 sum_a n_a log(f_a / p_a)`` for each circuit with clipped ``p``."""
    p = clip_probabilities(probs)
    n = ds.counts.astype(float)
    return 2.0 * np.sum(_xlogy(n, ds.frequencies) - _xlogy(n, p), axis=1)


def loglikelihood(m: GateSetModel, ds: Dataset, batch: CircuitBatch | None = None) -> float:
    batch = batch or CircuitBatch(ds.circuits)
    p = clip_probabilities(batch.forward(m.layers, m.rho, m.povm))
    return float(np.sum(_xlogy(ds.counts.astype(float), p)))


def wilks_k(family: str, n_circuits: int) -> int:
    """Degrees of freedom: 3 per circuit minus the family's non-gauge parameters."""
    return 3 * n_circuits - models.n_nongauge_params(family)


def n_sigma(lam: float, k: int) -> float:
    if k <= 0:
        raise ValueError("k must be positive")
    return (lam - k) / np.sqrt(2.0 * k)


# --- objective --------------------------------------------------------------

def _psd_penalty(ops: np.ndarray, basis: np.ndarray):
    """Sum of squared negative eigenvalues of ``sum_m x[k, m] basis[m]`` and its gradient."""
    mats = np.einsum("km,mij->kij", ops, basis)
    mats = 0.5 * (mats + mats.conj().transpose(0, 2, 1))
    evals, evecs = np.linalg.eigh(mats)
    neg = np.minimum(evals, 0.0)
    value = float(np.sum(neg**2))
    if value == 0.0:
        return 0.0, np.zeros_like(ops)
    weight = np.einsum("kij,kj,klj->kil", evecs, 2.0 * neg, evecs.conj())
    grad = np.real(np.einsum("mij,kji->km", basis, weight))
    return value, grad


def _cp_pieces_penalty(m: GateSetModel):
    gates, states, effects = m.pieces()
    nq = 2 if m.family == models.GENERAL else 1
    dim = 4**nq
    choi_basis = superop._choi_basis(nq).reshape(dim * dim, *superop._choi_basis(nq).shape[2:])
    pbasis = superop.pauli_basis(nq)
    vg, gg = _psd_penalty(gates.reshape(len(gates), -1), choi_basis)
    vs, gs = _psd_penalty(states, pbasis)
    ve, ge = _psd_penalty(effects, pbasis)
    grad = m.pieces_pullback(gg.reshape(gates.shape), gs, ge)
    return vg + vs + ve, grad


def cp_violation(m: GateSetModel) -> float:
    """Largest negative eigenvalue magnitude over gate Choi matrices and SPAM operators."""
    gates, states, effects = m.pieces()
    nq = 2 if m.family == models.GENERAL else 1
    worst = max(superop.cp_violation(g) for g in gates)
    for v in np.concatenate([states, effects]):
        ev = np.linalg.eigvalsh(superop.operator_from_vec(v))
        worst = max(worst, -ev.min())
    return float(max(worst, 0.0))


class Objective:
    """Smooth objective (and gradient) of a family's parameters on a dataset."""

    def __init__(self, family: str, ds: Dataset, batch: CircuitBatch | None = None):
        self.family = family
        self.ds = ds
        self.batch = batch or CircuitBatch(ds.circuits)
        self.counts = ds.counts.astype(float)
        self.totals = self.counts.sum(axis=1)
        self.freqs = ds.frequencies
        self.nlogf = float(np.sum(_xlogy(self.counts, self.freqs)))
        self.chi2_weight = self.totals[:, None] / np.maximum(
            self.freqs, 1.0 / np.maximum(self.totals[:, None], 1.0)
        )
        self.n_eval = 0

    def model(self, theta) -> GateSetModel:
        return GateSetModel(self.family, theta)

    def _loglik_terms(self, p):
        above = p >= P_FLOOR
        safe = np.where(above, p, P_FLOOR)
        d = p - P_FLOOR
        logp = np.where(above, np.log(safe), np.log(P_FLOOR) + d / P_FLOOR - 0.5 * (d / P_FLOOR) ** 2)
        dlogp = np.where(above, 1.0 / safe, 1.0 / P_FLOOR - d / P_FLOOR**2)
        return logp, dlogp

    def __call__(self, theta, mode: str = "logl", cp_weight: float = 0.0):
        self.n_eval += 1
        m = self.model(theta)
        p = self.batch.forward(m.layers, m.rho, m.povm, keep=True)
        if mode == "logl":
            logp, dlogp = self._loglik_terms(p)
            value = 2.0 * (self.nlogf - float(np.sum(self.counts * logp)))
            dp = -2.0 * self.counts * dlogp
            # Outcomes with no counts exert no pull in the multinomial term, so
            # without this barrier they drift negative and inflate the others.
            short = np.maximum(P_FLOOR - p, 0.0)
            if np.any(short):
                scale = self.totals[:, None] / P_BARRIER
                value += float(np.sum(scale * short**2))
                dp = dp - 2.0 * scale * short
        elif mode == "chi2":
            r = p - self.freqs
            value = float(np.sum(self.chi2_weight * r * r))
            dp = 2.0 * self.chi2_weight * r
        else:
            raise ValueError(f"unknown objective mode {mode!r}")
        dl, dr, de = self.batch.backward(m.layers, m.povm, dp)
        grad = m.pullback(dl, dr, de)
        if cp_weight > 0:
            pv, pg = _cp_pieces_penalty(m)
            value += cp_weight * pv
            grad = grad + cp_weight * pg
        return value, grad


# --- fitting ----------------------------------------------------------------

class _StallMonitor:
    """Stops L-BFGS-B once the objective improves by less than ``tol`` over ``window`` iterations."""

    def __init__(self, window: int, tol: float):
        self.window = window
        self.tol = tol
        self.history = []
        self.stalled = False

    def __call__(self, intermediate_result):
        self.history.append(float(intermediate_result.fun))
        if len(self.history) > self.window:
            if self.history[-self.window - 1] - self.history[-1] < self.tol:
                self.stalled = True
                raise StopIteration


def _minimize(obj: Objective, theta0, mode, cp_weight, max_iter, cfg: FitConfig):
    monitor = _StallMonitor(cfg.stall_window, cfg.stall_tol)
    res = scipy.optimize.minimize(
        obj,
        np.array(theta0, dtype=float),
        args=(mode, cp_weight),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "maxfun": 2 * max_iter + 50, "ftol": cfg.ftol,
                 "gtol": cfg.gtol, "maxcor": 30},
        callback=monitor,
    )
    res.stalled = monitor.stalled
    return res


def _finish(obj: Objective, theta, diagnostics) -> FitResult:
    m = obj.model(theta)
    p = obj.batch.forward(m.layers, m.rho, m.povm)
    llr = per_circuit_llr(p, obj.ds)
    lam = float(llr.sum())
    k = wilks_k(obj.family, len(obj.ds))
    logl = float(np.sum(_xlogy(obj.counts, clip_probabilities(p))))
    return FitResult(m, logl, lam, k, float(n_sigma(lam, k)), llr, obj.ds.keys, diagnostics)


def _polish(obj: Objective, theta0, cfg: FitConfig, chi2_stage: bool = True):
    """Run the chi2 and log-likelihood stages from ``theta0``; returns (theta, diagnostics)."""
    theta = np.array(theta0, dtype=float)
    iterations = 0
    if chi2_stage and cfg.chi2_max_iter > 0:
        res = _minimize(obj, theta, "chi2", cfg.cp_weights[0], cfg.chi2_max_iter, cfg)
        theta = res.x
        iterations += int(res.nit)
    res = None
    converged = False
    for w in cfg.cp_weights:
        res = _minimize(obj, theta, "logl", w, cfg.max_iter, cfg)
        theta = res.x
        iterations += int(res.nit)
        # L-BFGS-B flags a line-search stall as failure even at the optimum; accept
        # it after progress, or at once when the previous stage had converged
        # (a heavier penalty stage then starts at its own optimum).  A slow tail
        # whose total improvement is negligible in lambda also counts.
        converged = bool(res.success) or res.stalled or (res.status == 2 and (res.nit > 0 or converged))
        viol = cp_violation(obj.model(theta))
        if viol <= cfg.cp_tol:
            break
    gnorm = float(np.max(np.abs(res.jac)))
    diag = {
        "iterations": iterations,
        "converged": converged,
        "message": "objective stalled" if res.stalled else str(res.message),
        "final_gradient_norm": gnorm,
        "cp_violation": cp_violation(obj.model(theta)),
        "objective": float(res.fun),
    }
    return theta, diag


def mle_fit(
    tag: str,
    ds: Dataset,
    cfg: FitConfig | None = None,
    seed_model: GateSetModel | None = None,
    batch: CircuitBatch | None = None,
) -> FitResult:
    """Maximum-likelihood estimate of family ``tag``.

    The smallest family starts from ``cfg.starts`` seeded perturbations of the
    ideal model and keeps the best.  A larger family is always started from
    the embedded optimum of the next smaller family: ``seed_model`` when
    given, otherwise that smaller fit is computed first.  The result is never
    worse (in ``lambda``) than its embedded seed.
    """
    cfg = cfg or FitConfig()
    if tag not in FAMILIES:
        raise ValueError(f"unknown model family {tag!r}")
    batch = batch or CircuitBatch(ds.circuits)
    obj = Objective(tag, ds, batch)
    order = FAMILIES.index(tag)

    if seed_model is None and order > 0:
        seed_model = mle_fit(FAMILIES[order - 1], ds, cfg, batch=batch).model
    if seed_model is not None:
        if FAMILIES.index(seed_model.family) > order:
            raise ValueError(f"cannot seed {tag} from larger family {seed_model.family}")
        start = seed_model if seed_model.family == tag else models.embed(seed_model, tag)
        seed_result = _finish(obj, start.theta, {})
        theta, diag = _polish(obj, start.theta, cfg)
        result = _finish(obj, theta, diag)
        if result.lam > seed_result.lam:
            diag = dict(diag, kept_seed=True)
            result = _finish(obj, start.theta, diag)
        result.diagnostics["seeded_from"] = seed_model.family
        return result

    best = None
    for s in range(cfg.starts):
        start = models.instantiate(tag, "perturbed", seed=cfg.seed * 1000 + s, scale=cfg.perturb_scale)
        theta, diag = _polish(obj, start.theta, cfg)
        result = _finish(obj, theta, dict(diag, start=s))
        log.debug("start %d: lambda=%.3f", s, result.lam)
        if best is None or result.lam < best.lam:
            best = result
    best.diagnostics["starts"] = cfg.starts
    return best


def fit_nested(ds: Dataset, families=FAMILIES, cfg: FitConfig | None = None) -> dict:
    """Fit families smallest-first, seeding each from the previous optimum."""
    cfg = cfg or FitConfig()
    batch = CircuitBatch(ds.circuits)
    wanted = sorted(set(families), key=FAMILIES.index)
    results = {}
    prev = None
    for tag in FAMILIES[: FAMILIES.index(wanted[-1]) + 1]:
        res = mle_fit(tag, ds, cfg, seed_model=prev, batch=batch)
        prev = res.model
        if tag in wanted:
            results[tag] = res
    return results


# --- parametric bootstrap ------------------------------------------------------

@dataclass
class BootstrapResult:
    estimates: dict
    halfwidths: dict
    samples: dict
    dropped: int
    replicates: int


def bootstrap(fit: FitResult, ds: Dataset, quantities, replicates: int = 20, seed: int = 0,
              cfg: FitConfig | None = None) -> BootstrapResult:
    """Parametric bootstrap of scalar functions of the fitted model.

    ``quantities(model) -> dict[str, float]``.  Each replicate resamples the
    counts from the fitted probabilities (same shots per circuit) and refits
    the same family starting from ``fit.model``.  Half-widths are half the
    2.5-97.5 percentile range; non-converged replicates are dropped and
    counted.
    """
    if replicates < 20:
        raise ValueError("at least 20 bootstrap replicates are required")
    cfg = cfg or FitConfig()
    batch = CircuitBatch(ds.circuits)
    probs = clip_probabilities(batch.forward(fit.model.layers, fit.model.rho, fit.model.povm))
    shots = ds.totals
    base = quantities(fit.model)
    samples = {k: [] for k in base}
    dropped = 0
    ss = np.random.SeedSequence(seed)
    for i, child in enumerate(ss.spawn(replicates)):
        rep_seed = int(child.generate_state(1)[0])
        rep = sample_from_probabilities(ds.circuits, probs, shots, rep_seed)
        obj = Objective(fit.family, rep, batch)
        theta, diag = _polish(obj, fit.model.theta, cfg, chi2_stage=False)
        if not diag["converged"]:
            dropped += 1
            continue
        vals = quantities(obj.model(theta))
        for k, v in vals.items():
            samples[k].append(float(v))
    halfwidths = {}
    for k, vals in samples.items():
        if vals:
            lo, hi = np.percentile(vals, [2.5, 97.5])
            halfwidths[k] = float(0.5 * (hi - lo))
        else:
            halfwidths[k] = None
    return BootstrapResult(base, halfwidths, {k: np.array(v) for k, v in samples.items()},
                           dropped, replicates)


def bootstrap_ci(fit: FitResult, ds: Dataset, replicates: int = 20, seed: int = 0,
                 quantities=None, cfg: FitConfig | None = None) -> dict:
    """Half-widths of 95% percentile intervals for ``quantities`` (default: lambda terms)."""
    if quantities is None:
        from .report import default_quantities

        quantities = default_quantities
    return bootstrap(fit, ds, quantities, replicates, seed, cfg).halfwidths


def format_uncertainty(value: float, halfwidth: float | None) -> str:
    """Render ``1.234(5)`` for ``1.234 +- 0.005``."""
    if halfwidth is None or not np.isfinite(halfwidth):
        return f"{value:g}"
    if halfwidth <= 0:
        return f"{value:g}(0)"
    exp = int(np.floor(np.log10(halfwidth)))
    digits = max(0, -exp)
    unc = int(round(halfwidth / 10.0 ** (-digits))) if digits else int(round(halfwidth))
    if unc >= 10 and digits > 0:
        digits -= 1
        unc = int(round(halfwidth / 10.0 ** (-digits)))
    if digits == 0:
        return f"{value:.0f}({int(round(halfwidth))})"
    return f"{value:.{digits}f}({unc})"
