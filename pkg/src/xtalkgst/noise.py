"""Ground-truth noise models for simulation, described by error-generator coefficients.

A noise description is a JSON-compatible dict::

    {
      "local": {"0": {"Gxpi2": {"h": [hx, hy, hz], "s": [sx, sy, sz]}, ...}, "1": {...}},
      "context": {"0": {"Gxpi2": {"Gi": {"h": [...]}}}},   # extra terms per spectator gate
      "layer": {"h": {"ZZ": 0.0023}, "s": {"XX": 1e-4}},     # two-qubit terms on every layer
      "depolarizing": 1e-3,                                  # per-qubit Pauli rate on every gate
      "spam": {"prep": 0.01, "readout": 0.02}
    }

Every key is optional.  Coefficients are radians (Hamiltonian) and
dimensionless rates (stochastic); each layer is built as
``exp(L) . exp(H_target + dH)``.
"""
from __future__ import annotations

import numpy as np

from . import errorgen, models, superop
from .circuits import GATES, LAYERS

__all__ = ["build_noise_model", "zz_noise", "ideal_spam"]

_ONE_Q = ("X", "Y", "Z")


def _embed_local(vec, q: int) -> dict:
    out = {}
    for axis, v in zip(_ONE_Q, vec):
        if v:
            lab = axis + "I" if q == 0 else "I" + axis
            out[lab] = float(v)
    return out


def _add(acc: dict, terms: dict) -> None:
    for k, v in terms.items():
        acc[k] = acc.get(k, 0.0) + v


def _vector(terms: dict) -> np.ndarray:
    labels = errorgen.nontrivial_paulis(2)
    return np.array([terms.get(lab, 0.0) for lab in labels])


def ideal_spam(prep: float = 0.0, readout: float = 0.0):
    """Product state/POVM with bit-flip preparation and readout errors."""
    p0 = superop.state_vec("0")
    p1 = superop.state_vec("1")
    rho1 = (1 - prep) * p0 + prep * p1
    e0 = (1 - readout) * p0 + readout * p1
    rho = np.kron(rho1, rho1)
    e1 = superop.identity_vec(1) - e0
    povm = np.array([np.kron(a, b) for a in (e0, e1) for b in (e0, e1)])
    return rho, povm


def build_noise_model(desc: dict) -> models.GateSetModel:
    """General-family model realizing a noise description."""
    local = desc.get("local", {})
    context = desc.get("context", {})
    layer_terms = desc.get("layer", {})
    dep = float(desc.get("depolarizing", 0.0))
    spam = desc.get("spam", {})
    if dep < 0:
        raise ValueError("depolarizing rate must be nonnegative")
    layers = []
    for a, b in LAYERS:
        ham, sto = {}, {}
        for q, (gate, spectator) in enumerate(((a, b), (b, a))):
            entry = local.get(str(q), {}).get(gate, {})
            _add(ham, _embed_local(entry.get("h", (0, 0, 0)), q))
            _add(sto, _embed_local(entry.get("s", (0, 0, 0)), q))
            cent = context.get(str(q), {}).get(gate, {}).get(spectator, {})
            _add(ham, _embed_local(cent.get("h", (0, 0, 0)), q))
            _add(sto, _embed_local(cent.get("s", (0, 0, 0)), q))
            if dep:
                _add(sto, _embed_local((dep, dep, dep), q))
        _add(ham, {k: float(v) for k, v in layer_terms.get("h", {}).items()})
        _add(sto, {k: float(v) for k, v in layer_terms.get("s", {}).items()})
        layers.append(errorgen.build_gate((a, b), _vector(ham), _vector(sto)))
    rho, povm = ideal_spam(float(spam.get("prep", 0.0)), float(spam.get("readout", 0.0)))
    return models.from_layers(np.array(layers), rho, povm, {"noise": desc})


def zz_noise(eps: float, background: dict | None = None) -> dict:
    """Noise description with a ``-i[(eps/2) ZZ, rho]`` error on every layer."""
    desc = dict(background or {})
    layer = dict(desc.get("layer", {}))
    h = dict(layer.get("h", {}))
    h["ZZ"] = h.get("ZZ", 0.0) + eps / 2.0
    layer["h"] = h
    desc["layer"] = layer
    return desc


def local_gates(desc: dict):
    """Single-qubit pieces ``gates[q][gate][context]`` of a description without layer terms."""
    if desc.get("layer"):
        raise ValueError("two-qubit layer terms do not factor into single-qubit gates")
    dep = float(desc.get("depolarizing", 0.0))
    out = []
    for q in range(2):
        per_gate = {}
        for gate in GATES:
            per_ctx = {}
            for ctx in GATES:
                e = desc.get("local", {}).get(str(q), {}).get(gate, {})
                c = desc.get("context", {}).get(str(q), {}).get(gate, {}).get(ctx, {})
                h = np.add(e.get("h", (0, 0, 0)), c.get("h", (0, 0, 0)))
                s = np.add(e.get("s", (0, 0, 0)), c.get("s", (0, 0, 0))) + dep
                per_ctx[ctx] = errorgen.build_gate(gate, h, s)
            per_gate[gate] = per_ctx
        out.append(per_gate)
    return out
