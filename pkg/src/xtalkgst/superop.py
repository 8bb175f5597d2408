"""Pauli-transfer-matrix algebra for one- and two-qubit channels.

Conventions used throughout the package:

* Superoperators act on density matrices expanded in the normalized Pauli
  basis ``{I, X, Y, Z} / sqrt(2)`` (tensor products for two qubits, qubit 0
  is the left factor).  In this basis every Hermiticity-preserving map is a
  real matrix and trace preservation is the single constraint
  ``R[0] == (1, 0, ..., 0)``.
* ``compose(a, b)`` means "apply ``a`` then ``b``", i.e. the matrix ``b @ a``.
* Outcome strings read ``"q0q1"``.
"""
from __future__ import annotations

import functools
import itertools

import numpy as np
import scipy.linalg

__all__ = [
    "PAULI",
    "BranchCutError",
    "pauli_basis",
    "pauli_labels",
    "pauli_operator",
    "ptm_from_unitary",
    "compose",
    "compose_all",
    "tensor",
    "choi_of",
    "ptm_from_choi",
    "is_cptp",
    "cp_violation",
    "log_near_identity",
    "expm",
    "state_vec",
    "operator_from_vec",
    "vec_from_operator",
    "computational_povm",
    "identity_vec",
    "probabilities_of",
]

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class BranchCutError(ValueError):
    """Raised when a matrix logarithm would be taken too close to the branch cut."""


def _nqubits(dim: int) -> int:
    if dim == 4:
        return 1
    if dim == 16:
        return 2
    raise ValueError(f"unsupported superoperator dimension {dim}; expected 4 or 16")


@functools.lru_cache(maxsize=None)
def pauli_labels(n: int) -> tuple[str, ...]:
    """Pauli strings on ``n`` qubits in basis order (``"II", "IX", ...``)."""
    return tuple("".join(p) for p in itertools.product("IXYZ", repeat=n))


def pauli_operator(label: str) -> np.ndarray:
    """Unnormalized Pauli operator for a string such as ``"ZZ"``."""
    op = np.ones((1, 1), dtype=complex)
    for ch in label:
        try:
            op = np.kron(op, PAULI[ch])
        except KeyError:
            raise ValueError(f"unknown Pauli label {label!r}") from None
    return op


@functools.lru_cache(maxsize=None)
def pauli_basis(n: int) -> np.ndarray:
    """Hilbert-Schmidt orthonormal Pauli basis, shape ``(4**n, 2**n, 2**n)``."""
    mats = np.array([pauli_operator(lab) for lab in pauli_labels(n)])
    mats /= np.sqrt(2**n)
    mats.setflags(write=False)
    return mats


def vec_from_operator(op: np.ndarray) -> np.ndarray:
    """Real Pauli-basis coordinates of a Hermitian operator."""
    op = np.asarray(op)
    basis = pauli_basis(_qubits_of_hilbert(op.shape[0]))
    return np.real(np.einsum("aij,ji->a", basis, op))


def operator_from_vec(vec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec_from_operator`."""
    vec = np.asarray(vec, dtype=float)
    basis = pauli_basis(_nqubits(vec.shape[0]))
    return np.einsum("a,aij->ij", vec, basis)


def _qubits_of_hilbert(d: int) -> int:
    if d == 2:
        return 1
    if d == 4:
        return 2
    raise ValueError(f"unsupported Hilbert-space dimension {d}")


def state_vec(bits: str) -> np.ndarray:
    """Pauli-basis vector of the computational basis state ``|bits>``."""
    d = 2 ** len(bits)
    psi = np.zeros(d)
    psi[int(bits, 2)] = 1.0
    return vec_from_operator(np.outer(psi, psi))


def identity_vec(n: int) -> np.ndarray:
    """Pauli-basis vector of the identity operator on ``n`` qubits."""
    return vec_from_operator(np.eye(2**n))


def computational_povm(n: int) -> np.ndarray:
    """Effects of the computational-basis measurement, rows ordered ``00, 01, 10, 11``."""
    return np.array(
        [state_vec(format(i, f"0{n}b")) for i in range(2**n)]
    )


def ptm_from_unitary(u: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    """Superoperator of ``rho -> u rho u^dagger``.

    Raises
    ------
    ValueError
        If ``u`` is not unitary within ``atol`` or has an unsupported size.
    """
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError("unitary must be a square matrix")
    n = _qubits_of_hilbert(u.shape[0])
    if not np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=atol):
        raise ValueError("matrix is not unitary")
    basis = pauli_basis(n)
    conj = u @ basis @ u.conj().T
    return np.real(np.einsum("aij,bji->ab", basis, conj))


def compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Channel that applies ``a`` first and then ``b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return b @ a


def compose_all(channels, dim: int = 16) -> np.ndarray:
    """Compose a sequence of channels in reading order; empty sequence gives identity."""
    out = np.eye(dim)
    for g in channels:
        out = compose(out, g)
    return out


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two-qubit channel ``a (x) b`` with ``a`` acting on qubit 0."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != (4, 4) or b.shape != (4, 4):
        raise ValueError("tensor expects two single-qubit (4x4) superoperators")
    return np.kron(a, b)


@functools.lru_cache(maxsize=None)
def _choi_basis(n: int) -> np.ndarray:
    # T[a, b] = kron(B_b^T, B_a) / d so that J = sum_ab R_ab T[a, b]
    basis = pauli_basis(n)
    d = 2**n
    t = np.einsum("bji,akl->abikjl", basis, basis).reshape(4**n, 4**n, d * d, d * d)
    t = t / d
    t.setflags(write=False)
    return t


def choi_of(g: np.ndarray) -> np.ndarray:
    """Unit-trace Choi matrix ``sum_ij |i><j| (x) g(|i><j|) / d``."""
    g = np.asarray(g, dtype=float)
    n = _nqubits(g.shape[0])
    return np.einsum("ab,abij->ij", g, _choi_basis(n))


def ptm_from_choi(j: np.ndarray) -> np.ndarray:
    """Inverse of :func:`choi_of`."""
    j = np.asarray(j)
    n = _qubits_of_hilbert(int(round(np.sqrt(j.shape[0]))))
    d = 2**n
    t = _choi_basis(n)
    return d * d * np.real(np.einsum("abij,ij->ab", t.conj(), j))


def cp_violation(g: np.ndarray) -> float:
    """Magnitude of the most negative Choi eigenvalue (0 for CP maps)."""
    evals = np.linalg.eigvalsh(choi_of(g))
    return float(max(0.0, -evals.min()))


def is_cptp(g: np.ndarray, tol: float = 1e-9) -> bool:
    g = np.asarray(g, dtype=float)
    tp_row = np.zeros(g.shape[0])
    tp_row[0] = 1.0
    if not np.allclose(g[0], tp_row, atol=tol, rtol=0):
        return False
    return cp_violation(g) <= tol


def expm(m: np.ndarray) -> np.ndarray:
    return scipy.linalg.expm(np.asarray(m, dtype=float))


def log_near_identity(g: np.ndarray, margin: float = 1e-3) -> np.ndarray:
    """Principal real logarithm of a superoperator.

    Raises
    ------
    BranchCutError
        If an eigenvalue sits within ``margin`` radians of the negative real
        axis or is numerically zero, where the principal branch is ill defined.
    """
    g = np.asarray(g, dtype=float)
    evals = np.linalg.eigvals(g)
    if np.min(np.abs(evals)) < 1e-12:
        raise BranchCutError("superoperator is singular; logarithm undefined")
    if np.max(np.abs(np.angle(evals))) > np.pi - margin:
        raise BranchCutError("eigenvalue too close to the negative real axis")
    out = scipy.linalg.logm(g)
    if np.iscomplexobj(out):
        if np.max(np.abs(out.imag)) > 1e-8:
            raise BranchCutError("logarithm has no real principal branch")
        out = out.real
    return out


def probabilities_of(rho: np.ndarray, povm: np.ndarray, channel: np.ndarray | None = None) -> np.ndarray:
    """Outcome probabilities ``E_k . channel . rho``."""
    vec = rho if channel is None else channel @ rho
    return povm @ vec
