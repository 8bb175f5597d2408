"""Model comparison: likelihood ratios, evidence ratios, wildcard error and diamond distances."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
from scipy import stats

from . import errorgen, superop
from .circuits import LAYERS
from .fit import FitResult, n_sigma, per_circuit_llr, wilks_k
from .models import FAMILIES, REFERENCE_PARAMS, GateSetModel, n_nongauge_params
from .simulate import Dataset, probabilities

log = logging.getLogger(__name__)

GAMMA_THRESHOLD = 2.0
WILDCARD_TOL = 1e-5

__all__ = [
    "lambda_llr",
    "n_sigma",
    "evidence_ratio",
    "WildcardResult",
    "wildcard_fit",
    "relax_predictions",
    "DiamondResult",
    "diamond_distance",
    "avg_diamond_error",
    "select_model",
    "ComparisonReport",
    "compare",
]


def _check_match(fit: FitResult, ds: Dataset) -> None:
    if list(fit.circuit_keys) != ds.keys:
        raise ValueError("fit was not produced on this dataset")


def lambda_llr(fit: FitResult, ds: Dataset) -> float:
    """``-2 (log L - log L_max)`` of the fitted model on ``ds``."""
    _check_match(fit, ds)
    p = probabilities(fit.model, ds.circuits, clip=False)
    return float(max(per_circuit_llr(p, ds).sum(), 0.0))


def _lam_np(fit):
    if isinstance(fit, FitResult):
        return fit.lam, n_nongauge_params(fit.family)
    lam, n_p = fit
    return float(lam), int(n_p)


def evidence_ratio(fit_large, fit_small) -> float:
    """``(lambda_small - lambda_large) / (N_p_large - N_p_small)``.

    Either argument may be a :class:`FitResult` or a ``(lambda, n_params)``
    pair.  For fit results ``N_p`` counts only parameters that are not gauge
    directions, the same count that enters ``k``; under the smaller model the
    ratio then has mean 1.  Two fits of the same family have ratio 0.
    """
    if isinstance(fit_large, FitResult) and isinstance(fit_small, FitResult):
        big, small = FAMILIES.index(fit_large.family), FAMILIES.index(fit_small.family)
        if big < small:
            raise ValueError(f"{fit_large.family} does not contain {fit_small.family}")
        if big == small:
            return 0.0
    lam_l, np_l = _lam_np(fit_large)
    lam_s, np_s = _lam_np(fit_small)
    if np_l <= np_s:
        raise ValueError("the larger model must have more parameters")
    return (lam_s - lam_l) / (np_l - np_s)


# --- wildcard -----------------------------------------------------------------

def _bisect(fun, lo, hi, iters: int = 80):
    """Vectorized bisection for increasing ``fun`` with ``fun(lo) <= 0 <= fun(hi)``."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = fun(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    return 0.5 * (lo + hi)


def relax_predictions(p: np.ndarray, f: np.ndarray, budgets: np.ndarray) -> np.ndarray:
    """Per-circuit distributions within TVD ``budgets`` of ``p`` closest to ``f`` in likelihood.

    Mass ``w`` is taken from outcomes over-predicted relative to the data
    (zero-count outcomes first) and given to under-predicted ones.  Raised
    outcomes become ``max(p, t f)`` and lowered ones ``min(p, u f)`` with
    ``t <= 1 <= u`` chosen so both moves equal ``w``.  Circuits whose TVD to
    the data is within budget are replaced by the data itself.
    """
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    p = p / p.sum(axis=1, keepdims=True)
    f = np.asarray(f, dtype=float)
    w = np.broadcast_to(np.asarray(budgets, dtype=float), (len(p),)).copy()
    tvd = 0.5 * np.abs(p - f).sum(axis=1)
    q = p.copy()
    full = tvd <= w
    q[full] = f[full]
    part = ~full & (w > 0)
    if not np.any(part):
        return q
    pp, ff, ww = p[part], f[part], w[part][:, None]

    def added(t):
        return np.sum(np.maximum(t * ff - pp, 0.0), axis=1, keepdims=True) - ww

    t = _bisect(added, np.zeros_like(ww), np.ones_like(ww))
    raised = np.maximum(pp, t * ff)

    zero = ff == 0
    free_mass = np.sum(np.where(zero, pp, 0.0), axis=1, keepdims=True)
    only_zero = free_mass >= ww
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(ff > 0, pp / np.where(ff > 0, ff, 1.0), 0.0)
    umax = np.maximum(ratio.max(axis=1, keepdims=True), 1.0)

    def removed_short(u):
        # increasing in u: (w - removed(u)) with removed(u) = sum max(p - u f, 0)
        return ww - np.sum(np.maximum(pp - u * ff, 0.0), axis=1, keepdims=True)

    u = _bisect(removed_short, np.ones_like(ww), umax)
    lowered = np.minimum(pp, u * ff)
    # When the zero-count outcomes alone can supply w, take it from them pro rata.
    scale = 1.0 - ww / np.where(free_mass > 0, free_mass, 1.0)
    lowered = np.where(only_zero, np.where(zero, pp * scale, pp), lowered)
    qq = np.where(raised > pp, raised, lowered)
    q[part] = qq / qq.sum(axis=1, keepdims=True)
    return q


@dataclass
class WildcardResult:
    """Single-parameter wildcard budget ``W`` with per-circuit budgets ``W * |C|``."""

    W: float
    budgets: np.ndarray
    lam_relaxed: float
    lam_limit: float
    max_circuit_llr: float
    circuit_limit: float
    alpha: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "W": float(self.W),
            "lambda_relaxed": float(self.lam_relaxed),
            "lambda_limit": float(self.lam_limit),
            "max_circuit_llr": float(self.max_circuit_llr),
            "circuit_limit": float(self.circuit_limit),
            "alpha": float(self.alpha),
            **self.diagnostics,
        }


def _circuit_sizes(ds: Dataset) -> np.ndarray:
    # The empty circuit still has preparation and measurement; give it one unit
    # so every circuit can be reconciled for large enough W.
    return np.array([max(c.depth, 1) for c in ds.circuits], dtype=float)


def wildcard_fit(fit: FitResult, ds: Dataset, alpha: float = 0.05, tol: float = WILDCARD_TOL) -> WildcardResult:
    """Smallest per-layer TVD budget ``W`` that makes the fit consistent with ``ds``.

    Consistency means the relaxed total ``lambda_W <= k + 2 sqrt(2k)`` and
    every relaxed per-circuit LLR below the chi-squared (3 dof) quantile at
    level ``alpha / n_circuits``.  ``W`` is bisected to absolute ``tol``.
    """
    _check_match(fit, ds)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    p = probabilities(fit.model, ds.circuits)
    f = ds.frequencies
    sizes = _circuit_sizes(ds)
    k = wilks_k(fit.family, len(ds))
    lam_limit = k + 2.0 * np.sqrt(2.0 * k)
    circuit_limit = float(stats.chi2.isf(alpha / len(ds), 3))

    def evaluate(W):
        q = relax_predictions(p, f, W * sizes)
        llr = per_circuit_llr(q, ds)
        return llr, float(llr.sum()) <= lam_limit and float(llr.max()) <= circuit_limit

    llr, ok = evaluate(0.0)
    evaluations = 1
    lo, hi = 0.0, None
    if ok:
        W = 0.0
    else:
        step = max(tol, 1e-4)
        while hi is None:
            llr_hi, ok_hi = evaluate(step)
            evaluations += 1
            if ok_hi:
                hi = step
            else:
                lo, step = step, 2.0 * step
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            _, ok_mid = evaluate(mid)
            evaluations += 1
            if ok_mid:
                hi = mid
            else:
                lo = mid
        W = hi
        llr, _ = evaluate(W)
    return WildcardResult(
        W=float(W),
        budgets=W * sizes,
        lam_relaxed=float(llr.sum()),
        lam_limit=float(lam_limit),
        max_circuit_llr=float(llr.max()),
        circuit_limit=circuit_limit,
        alpha=alpha,
        diagnostics={"evaluations": evaluations, "tolerance": tol},
    )


# --- diamond distance -------------------------------------------------------------

@dataclass(frozen=True)
class DiamondResult:
    """Half diamond norm with certified bounds ``lower <= value <= upper``."""

    value: float
    lower: float
    upper: float
    converged: bool

    def __float__(self) -> float:
        return float(self.value)

    @property
    def gap(self) -> float:
        return self.upper - self.lower


def _positive_part_trace(k: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(k)
    return float(np.sum(ev[ev > 0]))


def _psd_sqrt(rho: np.ndarray):
    ev, vec = np.linalg.eigh(rho)
    ev = np.clip(ev, 0.0, None)
    return (vec * np.sqrt(ev)) @ vec.conj().T


def _state_from_params(x: np.ndarray, d: int) -> np.ndarray:
    b = (x[: d * d] + 1j * x[d * d :]).reshape(d, d)
    rho = b @ b.conj().T
    return rho / np.trace(rho).real


def _primal_value(rho: np.ndarray, j: np.ndarray, d: int) -> float:
    a = np.kron(_psd_sqrt(rho), np.eye(d))
    return _positive_part_trace(a @ j @ a)


def _dual_bound(rho: np.ndarray, j: np.ndarray, d: int) -> float:
    """``lambda_max(Tr_out Y)`` for the feasible ``Y = A^-1 (A J A)_+ A^-1`` built from ``rho``."""
    ev, vec = np.linalg.eigh(rho)
    if ev.min() <= 0:
        return np.inf
    s = (vec * np.sqrt(ev)) @ vec.conj().T
    s_inv = (vec / np.sqrt(ev)) @ vec.conj().T
    a = np.kron(s, np.eye(d))
    a_inv = np.kron(s_inv, np.eye(d))
    kev, kvec = np.linalg.eigh(a @ j @ a)
    kplus = (kvec * np.clip(kev, 0.0, None)) @ kvec.conj().T
    y = a_inv @ kplus @ a_inv
    y = 0.5 * (y + y.conj().T)
    reduced = np.trace(y.reshape(d, d, d, d), axis1=1, axis2=3)
    return float(np.linalg.eigvalsh(reduced).max())


def diamond_distance(g: np.ndarray, target: np.ndarray, tol: float = 1e-6, starts: int = 3,
                     seed: int = 0) -> DiamondResult:
    """Half the diamond norm of ``g - target`` for trace-preserving PTMs.

    The semidefinite characterization ``max tr[((sqrt(rho) x I) J (sqrt(rho) x I))_+]``
    over input states ``rho`` (``J`` the unnormalized Choi matrix of the
    difference) is concave in ``rho``.  It is maximized with L-BFGS over a
    Cholesky-like parameterization; every iterate is a feasible lower bound.
    An upper bound comes from the dual-feasible operator constructed from the
    best ``rho`` (slightly mixed if needed), and the result is flagged as
    not converged when the two differ by more than ``tol``.
    """
    g = np.asarray(g, dtype=float)
    target = np.asarray(target, dtype=float)
    if g.shape != target.shape:
        raise ValueError("channels must have the same dimension")
    delta = g - target
    if not np.allclose(delta[0], 0.0, atol=1e-9):
        raise ValueError("both channels must be trace preserving")
    d = int(round(np.sqrt(g.shape[0])))
    if np.max(np.abs(delta)) < 1e-15:
        return DiamondResult(0.0, 0.0, 0.0, True)
    j = d * superop.choi_of(delta)
    j = 0.5 * (j + j.conj().T)

    def negative(x):
        return -_primal_value(_state_from_params(x, d), j, d)

    rng = np.random.default_rng(seed)
    x0s = [np.concatenate([np.eye(d).ravel(), np.zeros(d * d)])]
    for _ in range(starts - 1):
        x0s.append(np.concatenate([np.eye(d).ravel(), np.zeros(d * d)]) + 0.3 * rng.standard_normal(2 * d * d))
    best_rho, best = None, -np.inf
    for x0 in x0s:
        res = scipy.optimize.minimize(negative, x0, method="L-BFGS-B",
                                      options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-12})
        rho = _state_from_params(res.x, d)
        val = -float(res.fun)
        if val > best:
            best, best_rho = val, rho
    lower = best
    upper = np.inf
    for mix in (0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2):
        rho = (1 - mix) * best_rho + mix * np.eye(d) / d
        lower = max(lower, _primal_value(rho, j, d))
        upper = min(upper, _dual_bound(rho, j, d))
    upper = max(upper, lower)
    converged = upper - lower <= tol
    if not converged:
        log.warning("diamond distance gap %.3g exceeds tolerance %.3g", upper - lower, tol)
    return DiamondResult(0.5 * (lower + upper), lower, upper, converged)


def avg_diamond_error(m: GateSetModel, tol: float = 1e-6) -> float:
    """Mean diamond distance of the nine two-qubit layers from their ideal versions."""
    vals = [float(diamond_distance(m.layers[i], errorgen.target_gate(lay), tol=tol))
            for i, lay in enumerate(LAYERS)]
    return float(np.mean(vals))


# --- selection ----------------------------------------------------------------

def select_model(fits: dict, threshold: float = GAMMA_THRESHOLD):
    """Walk the nest from the smallest family and return ``(tag, gammas)``.

    The smaller model is accepted when the evidence ratio of the next larger
    model against it is at most ``threshold``.
    """
    missing = [t for t in FAMILIES if t not in fits]
    if missing:
        raise ValueError(f"missing fits for {missing}")
    gammas = {}
    for small, large in zip(FAMILIES, FAMILIES[1:]):
        gammas[f"{large}/{small}"] = evidence_ratio(fits[large], fits[small])
    for small, large in zip(FAMILIES, FAMILIES[1:]):
        if gammas[f"{large}/{small}"] <= threshold:
            return small, gammas
    return FAMILIES[-1], gammas


@dataclass
class ComparisonReport:
    """Fit-quality table across the model nest and the selected model."""

    models: dict
    gammas: dict
    selected: str
    threshold: float
    rule: str = ("walk the nest from crosstalk-free; keep the smaller model when "
                 "gamma(next larger vs it) <= threshold")

    def to_dict(self) -> dict:
        return {
            "models": {tag: dict(row) for tag, row in self.models.items()},
            "gamma": {k: float(v) for k, v in self.gammas.items()},
            "selected": self.selected,
            "gamma_threshold": float(self.threshold),
            "rule": self.rule,
        }


def compare(fits: dict, ds: Dataset, alpha: float = 0.05, threshold: float = GAMMA_THRESHOLD,
            wildcard: bool = True, diamond: bool = True, diamond_halfwidths: dict | None = None) -> ComparisonReport:
    """Assemble the comparison table for three fits of the same dataset."""
    selected, gammas = select_model(fits, threshold)
    rows = {}
    for tag in FAMILIES:
        fit = fits[tag]
        row = {
            "n_params": int(fit.n_params),
            "n_params_nongauge": int(n_nongauge_params(tag)),
            "n_params_reference": int(REFERENCE_PARAMS[tag]),
            "lambda": float(fit.lam),
            "k": int(fit.k),
            "n_sigma": float(fit.n_sigma),
            "converged": bool(fit.converged),
            "wildcard": wildcard_fit(fit, ds, alpha).W if wildcard else None,
            "avg_diamond": {
                "value": avg_diamond_error(fit.model) if diamond else None,
                "halfwidth": (diamond_halfwidths or {}).get(tag),
            },
        }
        rows[tag] = row
    return ComparisonReport(rows, gammas, selected, threshold)
