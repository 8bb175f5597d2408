"""The three nested process-matrix model families.

Parameter layouts (all gates trace preserving by construction, the fixed
first PTM row is never a parameter):

``crosstalk-free``
    ``[q][gate]`` -> 12 entries (rows 1-3 of a 4x4 PTM), then per qubit a
    3-component Bloch state and one free 4-component effect.  86 parameters.
``context-dependent``
    ``[q][gate][spectator gate]`` -> 12 entries, same SPAM.  230 parameters.
``general``
    ``[layer]`` -> 240 entries (rows 1-15 of a 16x16 PTM), a 15-component
    state and three free 16-component effects (the fourth is fixed by
    completeness).  2223 parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import errorgen, superop
from .circuits import GATES, LAYERS

CROSSTALK_FREE = "crosstalk-free"
CONTEXT_DEPENDENT = "context-dependent"
GENERAL = "general"
FAMILIES = (CROSSTALK_FREE, CONTEXT_DEPENDENT, GENERAL)

# gauge dimension (TP-preserving similarity transformations) of each family
GAUGE_PARAMS = {CROSSTALK_FREE: 24, CONTEXT_DEPENDENT: 24, GENERAL: 240}
# published reference counts, surfaced in reports next to ours
REFERENCE_PARAMS = {CROSSTALK_FREE: 86, CONTEXT_DEPENDENT: 230, GENERAL: 1697}

_N_SPAM_LOCAL = 7
_N_LOCAL_GATE = 12

__all__ = [
    "FAMILIES",
    "CROSSTALK_FREE",
    "CONTEXT_DEPENDENT",
    "GENERAL",
    "GAUGE_PARAMS",
    "REFERENCE_PARAMS",
    "n_nongauge_params",
    "GateSetModel",
    "n_params",
    "instantiate",
    "embed",
    "layer_channel",
    "from_local",
    "from_layers",
]


def _check_family(tag: str) -> None:
    if tag not in FAMILIES:
        raise ValueError(f"unknown model family {tag!r}")


def n_params(tag: str) -> int:
    _check_family(tag)
    if tag == CROSSTALK_FREE:
        return 2 * 3 * _N_LOCAL_GATE + 2 * _N_SPAM_LOCAL
    if tag == CONTEXT_DEPENDENT:
        return 2 * 3 * 3 * _N_LOCAL_GATE + 2 * _N_SPAM_LOCAL
    return 9 * 240 + 15 + 3 * 16


def n_nongauge_params(tag: str) -> int:
    return n_params(tag) - GAUGE_PARAMS[tag]


_ID1 = superop.identity_vec(1)
_ID2 = superop.identity_vec(2)


def _local_gate_index(tag: str, q: int, gate: int, ctx: int) -> int:
    if tag == CROSSTALK_FREE:
        return (q * 3 + gate) * _N_LOCAL_GATE
    return ((q * 3 + gate) * 3 + ctx) * _N_LOCAL_GATE


def _local_spam_offset(tag: str, q: int) -> int:
    base = 72 if tag == CROSSTALK_FREE else 216
    return base + q * _N_SPAM_LOCAL


def _local_gate(theta, off):
    g = np.zeros((4, 4))
    g[0, 0] = 1.0
    g[1:] = theta[off : off + 12].reshape(3, 4)
    return g


def _layer_pair(layer_idx: int) -> tuple[int, int]:
    return divmod(layer_idx, 3)


@dataclass(frozen=True, eq=False)
class GateSetModel:
    """A parameter vector of one family; derived channels are cached."""

    family: str
    theta: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        _check_family(self.family)
        theta = np.array(self.theta, dtype=float)
        if theta.shape != (n_params(self.family),):
            raise ValueError(
                f"{self.family} expects {n_params(self.family)} parameters, got {theta.shape}"
            )
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def n_params(self) -> int:
        return n_params(self.family)

    def with_theta(self, theta) -> "GateSetModel":
        return GateSetModel(self.family, theta, dict(self.metadata))

    # --- local pieces (factored families) -----------------------------------
    def local_gate(self, q: int, gate: str, context: str = "Gi") -> np.ndarray:
        """Single-qubit PTM of ``gate`` on qubit ``q`` while the spectator runs ``context``."""
        if self.family == GENERAL:
            raise ValueError("the general model has no single-qubit factors")
        off = _local_gate_index(self.family, q, GATES.index(gate), GATES.index(context))
        return _local_gate(self.theta, off)

    def local_state(self, q: int) -> np.ndarray:
        off = _local_spam_offset(self.family, q)
        return np.concatenate([[_ID1[0] / 2], self.theta[off : off + 3]])

    def local_effect(self, q: int) -> np.ndarray:
        off = _local_spam_offset(self.family, q) + 3
        return self.theta[off : off + 4].copy()

    # --- two-qubit view -------------------------------------------------------
    @cached_property
    def layers(self) -> np.ndarray:
        out = np.empty((9, 16, 16))
        if self.family == GENERAL:
            for l in range(9):
                out[l, 0] = 0.0
                out[l, 0, 0] = 1.0
                out[l, 1:] = self.theta[l * 240 : (l + 1) * 240].reshape(15, 16)
        else:
            for l in range(9):
                a, b = _layer_pair(l)
                g0 = _local_gate(self.theta, _local_gate_index(self.family, 0, a, b))
                g1 = _local_gate(self.theta, _local_gate_index(self.family, 1, b, a))
                out[l] = np.kron(g0, g1)
        out.setflags(write=False)
        return out

    @cached_property
    def rho(self) -> np.ndarray:
        if self.family == GENERAL:
            r = np.concatenate([[0.5], self.theta[2160:2175]])
        else:
            r = np.kron(self.local_state(0), self.local_state(1))
        r.setflags(write=False)
        return r

    @cached_property
    def povm(self) -> np.ndarray:
        if self.family == GENERAL:
            e = np.empty((4, 16))
            e[:3] = self.theta[2175:].reshape(3, 16)
            e[3] = _ID2 - e[:3].sum(axis=0)
        else:
            effects = []
            for q in range(2):
                e0 = self.local_effect(q)
                effects.append((e0, _ID1 - e0))
            e = np.array([np.kron(effects[0][i], effects[1][j]) for i in (0, 1) for j in (0, 1)])
        e.setflags(write=False)
        return e

    def pieces(self):
        """Gates, states and effects that must be physical, as Pauli-basis arrays.

        Returns ``(gates, states, effects)``: gates are PTMs, states/effects are
        Pauli vectors; for the factored families these are single-qubit objects.
        """
        if self.family == GENERAL:
            return self.layers, self.rho[None, :], self.povm
        gates = []
        contexts = (0,) if self.family == CROSSTALK_FREE else (0, 1, 2)
        for q in range(2):
            for g in range(3):
                for c in contexts:
                    gates.append(_local_gate(self.theta, _local_gate_index(self.family, q, g, c)))
        states = np.array([self.local_state(q) for q in range(2)])
        effects = []
        for q in range(2):
            e0 = self.local_effect(q)
            effects.extend([e0, _ID1 - e0])
        return np.array(gates), states, np.array(effects)

    def pullback(self, dlayers, drho, dpovm) -> np.ndarray:
        """Chain rule from two-qubit layer/SPAM gradients to ``d theta``."""
        grad = np.zeros(self.n_params)
        if self.family == GENERAL:
            for l in range(9):
                grad[l * 240 : (l + 1) * 240] = dlayers[l, 1:].ravel()
            grad[2160:2175] = drho[1:]
            grad[2175:] = (dpovm[:3] - dpovm[3]).ravel()
            return grad
        for l in range(9):
            a, b = _layer_pair(l)
            o0 = _local_gate_index(self.family, 0, a, b)
            o1 = _local_gate_index(self.family, 1, b, a)
            g0 = _local_gate(self.theta, o0)
            g1 = _local_gate(self.theta, o1)
            d4 = dlayers[l].reshape(4, 4, 4, 4)  # [i, k, j, m] for kron(g0, g1)[ik, jm]
            grad[o0 : o0 + 12] += np.einsum("ikjm,km->ij", d4, g1)[1:].ravel()
            grad[o1 : o1 + 12] += np.einsum("ikjm,ij->km", d4, g0)[1:].ravel()
        r0, r1 = self.local_state(0), self.local_state(1)
        dr = drho.reshape(4, 4)
        s0 = _local_spam_offset(self.family, 0)
        s1 = _local_spam_offset(self.family, 1)
        grad[s0 : s0 + 3] += (dr @ r1)[1:]
        grad[s1 : s1 + 3] += (r0 @ dr)[1:]
        e0, e1 = self.local_effect(0), self.local_effect(1)
        f0 = (e0, _ID1 - e0)
        f1 = (e1, _ID1 - e1)
        de0 = np.zeros(4)
        de1 = np.zeros(4)
        for i in (0, 1):
            for j in (0, 1):
                d = dpovm[2 * i + j].reshape(4, 4)
                sign0 = 1.0 if i == 0 else -1.0
                sign1 = 1.0 if j == 0 else -1.0
                de0 += sign0 * (d @ f1[j])
                de1 += sign1 * (f0[i] @ d)
        grad[s0 + 3 : s0 + 7] += de0
        grad[s1 + 3 : s1 + 7] += de1
        return grad

    def pieces_pullback(self, dgates, dstates, deffects) -> np.ndarray:
        """Chain rule from gradients w.r.t. :meth:`pieces` to ``d theta``."""
        grad = np.zeros(self.n_params)
        ng = len(dgates) * (dgates.shape[1] - 1) * dgates.shape[2]
        grad[:ng] = dgates[:, 1:, :].ravel()
        if self.family == GENERAL:
            grad[2160:2175] = dstates[0, 1:]
            grad[2175:] = (deffects[:3] - deffects[3]).ravel()
            return grad
        for q in range(2):
            off = _local_spam_offset(self.family, q)
            grad[off : off + 3] = dstates[q, 1:]
            grad[off + 3 : off + 7] = deffects[2 * q] - deffects[2 * q + 1]
        return grad

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "theta": [float(x) for x in self.theta],
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GateSetModel":
        return cls(d["family"], np.array(d["theta"], dtype=float), dict(d.get("metadata", {})))


def layer_channel(m: GateSetModel, layer) -> np.ndarray:
    """16x16 PTM of one layer, given as ``(gate_q0, gate_q1)`` or an index."""
    if not isinstance(layer, (int, np.integer)):
        layer = LAYERS.index(tuple(layer))
    return m.layers[layer]


def from_local(family: str, gates, states, effects, metadata=None) -> GateSetModel:
    """Build a factored model from single-qubit pieces.

    ``gates[q][gate]`` (crosstalk-free) or ``gates[q][gate][context]``
    (context-dependent) are 4x4 TP PTMs keyed by gate name; ``states[q]`` a
    Pauli vector; ``effects[q]`` the Pauli vector of the outcome-0 effect.
    """
    if family not in (CROSSTALK_FREE, CONTEXT_DEPENDENT):
        raise ValueError("from_local builds factored families only")
    theta = np.zeros(n_params(family))
    for q in range(2):
        for gi, g in enumerate(GATES):
            for ci, c in enumerate(GATES if family == CONTEXT_DEPENDENT else GATES[:1]):
                ptm = gates[q][g][c] if family == CONTEXT_DEPENDENT else gates[q][g]
                off = _local_gate_index(family, q, gi, ci)
                theta[off : off + 12] = np.asarray(ptm)[1:].ravel()
        off = _local_spam_offset(family, q)
        theta[off : off + 3] = np.asarray(states[q])[1:]
        theta[off + 3 : off + 7] = np.asarray(effects[q])
    return GateSetModel(family, theta, dict(metadata or {}))


def from_layers(layers, rho, povm, metadata=None) -> GateSetModel:
    """General-family model from nine 16x16 PTMs, a state and four effects."""
    layers = np.asarray(layers, dtype=float)
    povm = np.asarray(povm, dtype=float)
    theta = np.zeros(n_params(GENERAL))
    for l in range(9):
        theta[l * 240 : (l + 1) * 240] = layers[l, 1:].ravel()
    theta[2160:2175] = np.asarray(rho)[1:]
    theta[2175:] = povm[:3].ravel()
    return GateSetModel(GENERAL, theta, dict(metadata or {}))


def instantiate(tag: str, init="ideal", seed: int | None = None, scale: float = 0.0) -> GateSetModel:
    """Ideal model of a family, optionally with a seeded Gaussian perturbation.

    ``init`` is ``"ideal"`` or ``"perturbed"`` (then ``seed`` and ``scale``
    are used).
    """
    _check_family(tag)
    ideal_1q = {g: errorgen.target_gate(g) for g in GATES}
    state = superop.state_vec("0")
    effect = superop.state_vec("0")
    if tag == GENERAL:
        layers = np.array([errorgen.target_gate(lay) for lay in LAYERS])
        m = from_layers(layers, superop.state_vec("00"), superop.computational_povm(2))
    elif tag == CROSSTALK_FREE:
        m = from_local(tag, [ideal_1q, ideal_1q], [state, state], [effect, effect])
    else:
        ctx = {g: {c: ideal_1q[g] for c in GATES} for g in GATES}
        m = from_local(tag, [ctx, ctx], [state, state], [effect, effect])
    if init == "ideal":
        return m
    if init != "perturbed":
        raise ValueError(f"unknown init {init!r}")
    rng = np.random.default_rng(seed)
    theta = m.theta + scale * rng.standard_normal(m.n_params)
    return GateSetModel(tag, theta, {"init": "perturbed", "seed": seed, "scale": scale})


_ORDER = {tag: i for i, tag in enumerate(FAMILIES)}


def embed(m: GateSetModel, tag_large: str) -> GateSetModel:
    """Re-express ``m`` in a strictly larger family with identical predictions."""
    _check_family(tag_large)
    if _ORDER[tag_large] <= _ORDER[m.family]:
        raise ValueError(f"cannot embed {m.family} into {tag_large}")
    if tag_large == GENERAL:
        return from_layers(m.layers, m.rho, m.povm, m.metadata)
    gates = [
        {g: {c: m.local_gate(q, g) for c in GATES} for g in GATES}
        for q in range(2)
    ]
    return from_local(
        CONTEXT_DEPENDENT,
        gates,
        [m.local_state(q) for q in range(2)],
        [m.local_effect(q) for q in range(2)],
        m.metadata,
    )
