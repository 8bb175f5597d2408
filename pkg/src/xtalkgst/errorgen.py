"""Error generators: building noisy gates and decomposing estimates.

A noisy gate is written as ``G = exp(L) . exp(H + dH)`` where ``H`` is the
target's ideal Hamiltonian generator, ``dH`` a Hamiltonian error and ``L`` a
Pauli-stochastic generator.  Coefficients are stored in radians; reports
render milliradians.

For ``H_eff = h . sigma`` the ideal ``Gxpi2`` has ``h = (pi/4, 0, 0)``: the
Hamiltonian magnitude is half the rotation angle.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import superop

__all__ = [
    "GATE_NAMES",
    "TARGET_H",
    "HamiltonianCoeffs",
    "StochasticCoeffs",
    "GateErrorReport",
    "hamiltonian_generator",
    "stochastic_generator",
    "nontrivial_paulis",
    "target_generator",
    "target_gate",
    "build_gate",
    "decompose_gate",
    "context_variation",
    "commuting_error_rate",
    "zz_coefficient",
]

GATE_NAMES = ("Gi", "Gxpi2", "Gypi2")

# Hamiltonian coefficients (X, Y, Z) of each ideal single-qubit gate
TARGET_H = {
    "Gi": (0.0, 0.0, 0.0),
    "Gxpi2": (np.pi / 4, 0.0, 0.0),
    "Gypi2": (0.0, np.pi / 4, 0.0),
}


@dataclass(frozen=True)
class HamiltonianCoeffs:
    """Hamiltonian coefficients in radians, keyed by Pauli string order."""

    h: tuple[float, ...]
    labels: tuple[str, ...] = ("X", "Y", "Z")

    def as_array(self) -> np.ndarray:
        return np.array(self.h, dtype=float)

    def mrad(self) -> np.ndarray:
        return 1e3 * self.as_array()

    def __getitem__(self, label: str) -> float:
        return self.h[self.labels.index(label)]


@dataclass(frozen=True)
class StochasticCoeffs:
    s: tuple[float, ...]
    labels: tuple[str, ...] = ("X", "Y", "Z")

    def as_array(self) -> np.ndarray:
        return np.array(self.s, dtype=float)

    def __getitem__(self, label: str) -> float:
        return self.s[self.labels.index(label)]


@dataclass
class GateErrorReport:
    """Error-generator summary of one gate in one context.

    ``gauge_note`` names the entries that carry unobservable gauge offsets;
    differences of the same entry across contexts are gauge free.
    """

    gate: str
    context: str
    hamiltonian: HamiltonianCoeffs
    stochastic: StochasticCoeffs
    residual: float = 0.0
    hamiltonian_halfwidth: tuple[float, ...] | None = None
    stochastic_halfwidth: tuple[float, ...] | None = None
    gauge_note: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "gate": self.gate,
            "context": self.context,
            "hamiltonian_mrad": {
                lab: {"value": 1e3 * float(v), "halfwidth": None if self.hamiltonian_halfwidth is None
                      else 1e3 * float(self.hamiltonian_halfwidth[i])}
                for i, (lab, v) in enumerate(zip(self.hamiltonian.labels, self.hamiltonian.h))
            },
            "stochastic": {
                lab: {"value": float(v), "halfwidth": None if self.stochastic_halfwidth is None
                      else float(self.stochastic_halfwidth[i])}
                for i, (lab, v) in enumerate(zip(self.stochastic.labels, self.stochastic.s))
            },
            "residual": {"value": float(self.residual), "halfwidth": None},
            "gauge_note": self.gauge_note,
        }


def nontrivial_paulis(n: int) -> tuple[str, ...]:
    return superop.pauli_labels(n)[1:]


def _check_label(p: str, n: int) -> None:
    if len(p) != n or any(ch not in "IXYZ" for ch in p):
        raise ValueError(f"{p!r} is not a {n}-qubit Pauli string")
    if set(p) == {"I"}:
        raise ValueError("the identity Pauli generates no error")


@functools.lru_cache(maxsize=None)
def hamiltonian_generator(p: str, n: int | None = None) -> np.ndarray:
    """Superoperator of ``rho -> -i [P, rho]`` (antisymmetric)."""
    n = len(p) if n is None else n
    _check_label(p, n)
    op = superop.pauli_operator(p)
    basis = superop.pauli_basis(n)
    img = -1j * (op @ basis - basis @ op)
    gen = np.real(np.einsum("aij,bji->ab", basis, img))
    gen.setflags(write=False)
    return gen


@functools.lru_cache(maxsize=None)
def stochastic_generator(p: str, n: int | None = None) -> np.ndarray:
    """Superoperator of ``rho -> P rho P - rho`` (diagonal in the Pauli basis)."""
    n = len(p) if n is None else n
    _check_label(p, n)
    op = superop.pauli_operator(p)
    basis = superop.pauli_basis(n)
    img = op @ basis @ op - basis
    gen = np.real(np.einsum("aij,bji->ab", basis, img))
    gen.setflags(write=False)
    return gen


@functools.lru_cache(maxsize=None)
def _generator_stack(n: int, kind: str) -> np.ndarray:
    fn = hamiltonian_generator if kind == "H" else stochastic_generator
    stack = np.array([fn(p, n) for p in nontrivial_paulis(n)])
    stack.setflags(write=False)
    return stack


def _gate_label_to_tuple(target) -> tuple[str, ...]:
    if isinstance(target, str):
        if target in GATE_NAMES:
            return (target,)
        parts = tuple(target.split(":"))
        if len(parts) == 2 and all(x in GATE_NAMES for x in parts):
            return parts
        raise ValueError(f"unknown target label {target!r}")
    parts = tuple(target)
    if len(parts) not in (1, 2) or any(x not in GATE_NAMES for x in parts):
        raise ValueError(f"unknown target label {target!r}")
    return parts


def target_generator(target) -> np.ndarray:
    """Ideal Hamiltonian generator of a 1-qubit gate or a 2-qubit layer."""
    parts = _gate_label_to_tuple(target)
    n = len(parts)
    gen = np.zeros((4**n, 4**n))
    for q, name in enumerate(parts):
        for axis, coeff in zip("XYZ", TARGET_H[name]):
            if coeff:
                lab = "".join(axis if k == q else "I" for k in range(n))
                gen = gen + coeff * hamiltonian_generator(lab, n)
    return gen


@functools.lru_cache(maxsize=None)
def _target_gate_cached(parts: tuple[str, ...]) -> np.ndarray:
    g = superop.expm(target_generator(parts))
    g.setflags(write=False)
    return g


def target_gate(target) -> np.ndarray:
    return _target_gate_cached(_gate_label_to_tuple(target))


def _coerce(vec, n: int, name: str) -> np.ndarray:
    if isinstance(vec, (HamiltonianCoeffs, StochasticCoeffs)):
        vec = vec.as_array()
    k = 4**n - 1
    if vec is None:
        return np.zeros(k)
    arr = np.asarray(vec, dtype=float)
    if arr.shape != (k,):
        raise ValueError(f"{name} must have {k} entries for {n} qubit(s)")
    return arr


def build_gate(target, dh=None, s=None) -> np.ndarray:
    """Noisy gate ``exp(L) . exp(H_target + dH)``.

    ``dh`` and ``s`` are indexed by the non-identity Pauli strings in basis
    order (3 entries for one qubit, 15 for two).
    """
    parts = _gate_label_to_tuple(target)
    n = len(parts)
    dh = _coerce(dh, n, "dh")
    s = _coerce(s, n, "s")
    if np.any(s < 0):
        raise ValueError("stochastic rates must be nonnegative")
    ham = target_generator(parts) + np.einsum("k,kab->ab", dh, _generator_stack(n, "H"))
    lind = np.einsum("k,kab->ab", s, _generator_stack(n, "S"))
    return superop.expm(lind) @ superop.expm(ham)


def _model_gate(parts, x, n):
    k = 4**n - 1
    ham = target_generator(parts) + np.einsum("k,kab->ab", x[:k], _generator_stack(n, "H"))
    lind = np.einsum("k,kab->ab", x[k:], _generator_stack(n, "S"))
    return ham, lind


def decompose_gate(g: np.ndarray, target, tol: float = 1e-13, max_iter: int = 50):
    """Split an estimated gate into Hamiltonian and stochastic error coefficients.

    The starting point projects ``log(g . target^-1)`` onto the Hamiltonian and
    Pauli-stochastic generator spans.  Gauss-Newton iterations then solve for
    the exact ``exp(L) . exp(H + dH)`` factorization, so gates built by
    :func:`build_gate` round-trip exactly even when ``dH`` does not commute
    with the target.  Whatever the factorization cannot express is returned
    as ``residual`` (Frobenius norm).

    Returns
    -------
    (HamiltonianCoeffs, StochasticCoeffs, residual)
    """
    parts = _gate_label_to_tuple(target)
    n = len(parts)
    g = np.asarray(g, dtype=float)
    if g.shape != (4**n, 4**n):
        raise ValueError("gate dimension does not match target")
    labels = nontrivial_paulis(n)
    k = len(labels)
    hs = _generator_stack(n, "H")
    ss = _generator_stack(n, "S")
    basis_mat = np.concatenate([hs, ss]).reshape(2 * k, -1).T
    gen = superop.log_near_identity(g @ np.linalg.inv(target_gate(parts)))
    x, *_ = np.linalg.lstsq(basis_mat, gen.ravel(), rcond=None)

    def residual_and_jac(x):
        ham, lind = _model_gate(parts, x, n)
        eh, deh = _expm_and_frechet_stack(ham, hs)
        el, del_ = _expm_and_frechet_stack(lind, ss)
        model = el @ eh
        jac = np.concatenate([el @ deh, del_ @ eh]).reshape(2 * k, -1).T
        return (model - g).ravel(), jac

    for _ in range(max_iter):
        r, jac = residual_and_jac(x)
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        x = x + step
        if np.max(np.abs(step)) < tol:
            break
    r, _ = residual_and_jac(x)
    return (
        HamiltonianCoeffs(tuple(x[:k]), labels),
        StochasticCoeffs(tuple(x[k:]), labels),
        float(np.linalg.norm(r)),
    )


def _expm_and_frechet_stack(a, directions):
    out = None
    derivs = []
    for e in directions:
        val, d = scipy.linalg.expm_frechet(a, e)
        out = val
        derivs.append(d)
    return out, np.array(derivs)


def context_variation(a: HamiltonianCoeffs, b: HamiltonianCoeffs) -> np.ndarray:
    """Component-wise ``a - b`` in mrad; gauge offsets shared by both contexts cancel."""
    return 1e3 * (np.asarray(a.h) - np.asarray(b.h))


def commuting_error_rate(dh: HamiltonianCoeffs, target: str):
    """Gauge-invariant part of a single-qubit Hamiltonian error, in mrad.

    Over/under-rotation for ``Gxpi2``/``Gypi2``; the whole vector for ``Gi``.
    """
    if target == "Gxpi2":
        return 1e3 * dh["X"]
    if target == "Gypi2":
        return 1e3 * dh["Y"]
    if target == "Gi":
        return 1e3 * dh.as_array()
    raise ValueError(f"unknown target label {target!r}")


def zz_coefficient(g: np.ndarray) -> float:
    """Strength ``eps`` of a ``-i[(eps/2) ZZ, .]`` error in a two-qubit idle layer."""
    ham, _, _ = decompose_gate(g, ("Gi", "Gi"))
    return 2.0 * ham["ZZ"]
