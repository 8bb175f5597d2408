"""Two-qubit circuits of parallel single-qubit layers.

Text form::

    circuit := layer* ; layer := "[" gate ("," gate)* "]" ; gate := name ":" qubit

A qubit not mentioned in a layer idles (``Gi``).  Serialization always
writes both qubits, so ``parse(serialize(c)) == c``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

GATES = ("Gi", "Gxpi2", "Gypi2")
LAYERS = tuple((a, b) for a in GATES for b in GATES)
LAYER_INDEX = {lay: i for i, lay in enumerate(LAYERS)}

__all__ = [
    "GATES",
    "LAYERS",
    "LAYER_INDEX",
    "CircuitSyntaxError",
    "Circuit",
    "ExperimentDesign",
    "RBCircuit",
    "parse",
    "serialize",
    "PREP_FIDUCIALS",
    "GERMS",
    "MEAS_FIDUCIALS",
    "build_gst_design",
    "sample_rb_circuits",
    "interleave",
    "write_design",
    "read_design",
]


class CircuitSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


@dataclass(frozen=True)
class Circuit:
    """Ordered tuple of layers; each layer is ``(gate_on_q0, gate_on_q1)``.

    ``tags`` optionally records the GST structure (prep fiducial, germ index,
    repetitions, measurement fiducial) and does not take part in equality.
    """

    layers: tuple[tuple[str, str], ...] = ()
    tags: dict | None = field(default=None, compare=False, hash=False)

    def __post_init__(self):
        layers = tuple(tuple(lay) for lay in self.layers)
        for lay in layers:
            if len(lay) != 2 or lay[0] not in GATES or lay[1] not in GATES:
                raise ValueError(f"invalid layer {lay!r}")
        object.__setattr__(self, "layers", layers)

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def __add__(self, other: "Circuit") -> "Circuit":
        return Circuit(self.layers + other.layers)

    def __mul__(self, n: int) -> "Circuit":
        return Circuit(self.layers * n)

    def __str__(self) -> str:
        return serialize(self)

    def indices(self) -> list[int]:
        return [LAYER_INDEX[lay] for lay in self.layers]


_TOKEN = re.compile(r"\s*(Gi|Gxpi2|Gypi2)\s*:\s*([0-9]+)\s*")


def parse(text: str) -> Circuit:
    """Parse the bracketed layer notation into a :class:`Circuit`.

    Raises
    ------
    CircuitSyntaxError
        With the byte offset of the first offending character.
    """
    layers = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        if text[pos] != "[":
            raise CircuitSyntaxError("expected '['", pos)
        pos += 1
        gates = {}
        while True:
            m = _TOKEN.match(text, pos)
            if m is None:
                name = re.match(r"\s*([A-Za-z0-9_]*)", text[pos:]).group(1)
                if name:
                    raise CircuitSyntaxError(f"unknown gate label {name!r}", pos)
                raise CircuitSyntaxError("expected gate", pos)
            qubit = int(m.group(2))
            if qubit not in (0, 1):
                raise CircuitSyntaxError(f"qubit index {qubit} out of range", m.start(2))
            if qubit in gates:
                raise CircuitSyntaxError(f"qubit {qubit} used twice in one layer", m.start(2))
            gates[qubit] = m.group(1)
            pos = m.end()
            if pos < n and text[pos] == ",":
                pos += 1
                continue
            if pos < n and text[pos] == "]":
                pos += 1
                break
            raise CircuitSyntaxError("expected ',' or ']'", pos)
        layers.append((gates.get(0, "Gi"), gates.get(1, "Gi")))
    return Circuit(tuple(layers))


def serialize(c: Circuit) -> str:
    return "".join(f"[{a}:0,{b}:1]" for a, b in c.layers)


# Building blocks of the GST experiment, qubit j -> 0 and k -> 1.
def _c(*layers) -> Circuit:
    return Circuit(tuple(layers))


_X0, _Y0 = ("Gxpi2", "Gi"), ("Gypi2", "Gi")
_X1, _Y1 = ("Gi", "Gxpi2"), ("Gi", "Gypi2")
_XX, _XY = ("Gxpi2", "Gxpi2"), ("Gxpi2", "Gypi2")
_YX, _YY = ("Gypi2", "Gxpi2"), ("Gypi2", "Gypi2")
_II = ("Gi", "Gi")

PREP_FIDUCIALS = (
    _c(),
    _c(_X1),
    _c(_Y1),
    _c(_X1, _X1),
    _c(_X0),
    _c(_XX, _XX, _XX),
    _c(_XY),
    _c(_XX, _X1),
    _c(_Y0),
    _c(_YX),
    _c(_YY, _YY, _YY),
    _c(_YX, _X1),
    _c(_X0, _X0),
    _c(_XX, _X0),
    _c(_XY, _X0),
    _c(_XX, _XX),
)

GERMS = (
    _c(_II),
    _c(_X1),
    _c(_Y1),
    _c(_X0),
    _c(_Y0),
    _c(_XX),
    _c(_YY),
    _c(_XY),
    _c(_YX),
    _c(_XX, _YX, _YY),
    _c(_XX, _XY, _YY),
    _c(_Y0, _YX, _XX),
    _c(_Y1, _XY, _XX),
    _c(_YX, _X1, _XY, _X0),
    _c(_X0, _YY, _XY),
    _c(_X1, _XX, _XY),
    _c(_Y0, _YY, _Y1, _X0),
    _c(_YY, _XY, _YX),
    _c(_Y0, _XY, _YY),
    _c(_Y1, _YX, _X0),
    _c(_X1, _Y1),
    _c(_YY, _YX),
    _c(_X0, _Y0),
    _c(_X0, _X0, _Y0),
    _c(_X1, _X1, _Y1),
)

MEAS_FIDUCIALS = (
    _c(),
    _c(_X1),
    _c(_Y1),
    _c(_X1, _X1),
    _c(_X0),
    _c(_Y0),
    _c(_X0, _X0),
    _c(_XX, _XX, _XX),
    _c(_XY),
    _c(_YX),
    _c(_YY, _YY, _YY),
)


@dataclass
class ExperimentDesign:
    circuits: list[Circuit]
    lmax: int
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.circuits)

    def serialized(self) -> list[str]:
        return [serialize(c) for c in self.circuits]


def _lengths(lmax: int) -> list[int]:
    if lmax < 1 or lmax & (lmax - 1):
        raise ValueError(f"lmax must be a power of two, got {lmax}")
    out, l = [], 1
    while l <= lmax:
        out.append(l)
        l *= 2
    return out


def build_gst_design(lmax: int) -> ExperimentDesign:
    """Every ``prep + germ**n + meas`` with ``n = L // len(germ)``, deduplicated.

    Order is deterministic: by ``L``, then germ, prep fiducial and measurement
    fiducial; a circuit keeps the position of its first occurrence.
    """
    seen: dict[str, Circuit] = {}
    for L in _lengths(lmax):
        for gi, germ in enumerate(GERMS):
            reps = L // len(germ)
            body = germ * reps
            for pi, prep in enumerate(PREP_FIDUCIALS):
                for mi, meas in enumerate(MEAS_FIDUCIALS):
                    layers = prep.layers + body.layers + meas.layers
                    key = serialize(Circuit(layers))
                    if key not in seen:
                        seen[key] = Circuit(
                            layers,
                            tags={"prep": pi, "germ": gi, "reps": reps, "meas": mi, "L": L},
                        )
    return ExperimentDesign(
        list(seen.values()),
        lmax,
        provenance={
            "prep_fiducials": [serialize(c) for c in PREP_FIDUCIALS],
            "germs": [serialize(c) for c in GERMS],
            "meas_fiducials": [serialize(c) for c in MEAS_FIDUCIALS],
        },
    )


# --- simultaneous randomized benchmarking -----------------------------------

# Bloch-vector action of the ideal gates (Clifford signed permutations).
_BLOCH = {
    "Gi": np.eye(3, dtype=int),
    "Gxpi2": np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]]),
    "Gypi2": np.array([[0, 0, 1], [0, 1, 0], [-1, 0, 0]]),
}


@dataclass(frozen=True)
class RBCircuit:
    circuit: Circuit
    target: str
    mode: str
    depth: int


RB_MODES = ("simultaneous", "q0-idle", "q1-idle")


def _inversion(gates: list[str]) -> tuple[list[str], str]:
    """Shortest suffix taking the final Bloch vector to +-Z, and the resulting bit."""
    v = np.array([0, 0, 1])
    for g in gates:
        v = _BLOCH[g] @ v
    axis = int(np.argmax(np.abs(v)))
    suffix = []
    if axis == 1:
        suffix = ["Gxpi2"]
    elif axis == 0:
        suffix = ["Gypi2"]
    for g in suffix:
        v = _BLOCH[g] @ v
    return suffix, "0" if v[2] > 0 else "1"


def sample_rb_circuits(depths, per_depth: int, mode: str, seed: int) -> list[RBCircuit]:
    """Simplified simultaneous RB: random layers plus a per-qubit inversion suffix.

    Random gates for both qubits come from one stream keyed by ``seed``;
    ``mode`` replaces the gates of the idled qubit with ``Gi``.  Sampling the
    three modes with one seed therefore yields a simultaneous circuit and its
    two idle-spectator variants.
    """
    if mode not in RB_MODES:
        raise ValueError(f"unknown RB mode {mode!r}")
    rng = np.random.default_rng(seed)
    active = {"simultaneous": (True, True), "q0-idle": (False, True), "q1-idle": (True, False)}[mode]
    out = []
    for d in depths:
        if d < 0:
            raise ValueError("depths must be nonnegative")
        for _ in range(per_depth):
            draws = rng.integers(0, 3, size=(d, 2))
            per_qubit = []
            for q in range(2):
                if active[q]:
                    per_qubit.append([GATES[i] for i in draws[:, q]])
                else:
                    per_qubit.append(["Gi"] * d)
            suffixes, bits = zip(*(_inversion(g) for g in per_qubit))
            width = max(len(s) for s in suffixes)
            body = list(zip(*per_qubit)) if d else []
            tail = [
                tuple(s[i] if i < len(s) else "Gi" for s in suffixes)
                for i in range(width)
            ]
            out.append(RBCircuit(Circuit(tuple(body + tail)), "".join(bits), mode, d))
    return out


def interleave(designs, seed: int) -> list[Circuit]:
    """Seeded shuffle of the concatenation of several circuit lists.

    Duplicates are kept, so a circuit present in two designs is run twice as
    often.
    """
    pool = []
    for d in designs:
        pool.extend(d.circuits if isinstance(d, ExperimentDesign) else d)
    order = np.random.default_rng(seed).permutation(len(pool))
    return [pool[i] for i in order]


def write_design(circuits, path) -> None:
    text = "".join(serialize(c) + "\n" for c in circuits)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_design(path) -> list[Circuit]:
    with open(path, encoding="utf-8") as fh:
        return [parse(line.rstrip("\n")) for line in fh]
