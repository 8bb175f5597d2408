"""Forward simulation, seeded multinomial sampling and dataset handling."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .circuits import Circuit, parse, serialize
from .engine import CircuitBatch
from .models import GateSetModel

OUTCOMES = ("00", "01", "10", "11")
P_CLIP = 1e-12
DATASET_FORMAT = "xtalk-gst-dataset"

__all__ = [
    "OUTCOMES",
    "P_CLIP",
    "Dataset",
    "probabilities",
    "circuit_probabilities",
    "clip_probabilities",
    "sample",
    "sample_from_probabilities",
    "aggregate",
    "consistency_test",
    "ConsistencyResult",
    "write_dataset",
    "read_dataset",
]


@dataclass
class Dataset:
    """Outcome counts for an ordered list of distinct circuits."""

    circuits: list[Circuit]
    counts: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (len(self.circuits), len(OUTCOMES)):
            raise ValueError("counts must have shape (n_circuits, 4)")
        if np.any(counts < 0) or not np.all(np.equal(np.mod(counts, 1), 0)):
            raise ValueError("counts must be nonnegative integers")
        self.counts = counts.astype(np.int64)
        self._keys = [serialize(c) for c in self.circuits]
        if len(set(self._keys)) != len(self._keys):
            raise ValueError("dataset circuits must be unique")
        self._index = {k: i for i, k in enumerate(self._keys)}

    def __len__(self) -> int:
        return len(self.circuits)

    @property
    def keys(self) -> list[str]:
        return list(self._keys)

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def frequencies(self) -> np.ndarray:
        tot = self.totals[:, None]
        return np.divide(self.counts, tot, out=np.zeros(self.counts.shape), where=tot > 0)

    def __getitem__(self, circuit) -> dict:
        key = circuit if isinstance(circuit, str) else serialize(circuit)
        row = self.counts[self._index[key]]
        return dict(zip(OUTCOMES, (int(x) for x in row)))

    def __contains__(self, circuit) -> bool:
        key = circuit if isinstance(circuit, str) else serialize(circuit)
        return key in self._index

    def index_of(self, circuit) -> int:
        key = circuit if isinstance(circuit, str) else serialize(circuit)
        return self._index[key]

    def subset(self, circuits) -> "Dataset":
        rows = [self.index_of(c) for c in circuits]
        return Dataset([self.circuits[i] for i in rows], self.counts[rows], dict(self.metadata))

    def with_counts(self, counts) -> "Dataset":
        return Dataset(self.circuits, counts, dict(self.metadata))


def clip_probabilities(p: np.ndarray, floor: float = P_CLIP) -> np.ndarray:
    q = np.clip(p, floor, 1.0)
    return q / q.sum(axis=-1, keepdims=True)


def probabilities(m: GateSetModel, circuits, clip: bool = True, batch: CircuitBatch | None = None):
    """Outcome distributions for many circuits, shape ``(n, 4)``.

    With ``clip=False`` the raw (possibly slightly negative) values are returned.
    """
    if batch is None:
        batch = CircuitBatch(list(circuits))
    raw = batch.forward(m.layers, m.rho, m.povm)
    return clip_probabilities(raw) if clip else raw


def circuit_probabilities(m: GateSetModel, c: Circuit, clip: bool = True) -> dict:
    """Outcome distribution of a single circuit as ``{"00": p, ...}``."""
    state = m.rho
    for l in c.indices():
        state = m.layers[l] @ state
    raw = m.povm @ state
    p = clip_probabilities(raw) if clip else raw
    return dict(zip(OUTCOMES, (float(x) for x in p)))


def _substream(seed: int, key: str) -> np.random.Generator:
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng([int(seed), *words])


def sample(m: GateSetModel, circuits, shots: int, seed: int, metadata: dict | None = None) -> Dataset:
    """Multinomial counts for each circuit from a per-circuit RNG substream.

    The substream is derived from ``(seed, serialized circuit)`` so the
    dataset does not depend on circuit order or evaluation schedule.
    """
    if shots <= 0:
        raise ValueError("shots must be positive")
    circuits = list(circuits)
    probs = probabilities(m, circuits)
    return sample_from_probabilities(circuits, probs, shots, seed, metadata)


def sample_from_probabilities(circuits, probs, shots, seed, metadata=None) -> Dataset:
    counts = np.empty((len(circuits), len(OUTCOMES)), dtype=np.int64)
    shots_arr = np.broadcast_to(np.asarray(shots), (len(circuits),))
    for i, c in enumerate(circuits):
        rng = _substream(seed, serialize(c))
        counts[i] = rng.multinomial(int(shots_arr[i]), probs[i])
    meta = {"seed": int(seed), "shots": int(np.max(shots_arr)) if len(circuits) else int(shots)}
    meta.update(metadata or {})
    return Dataset(list(circuits), counts, meta)


def aggregate(datasets) -> Dataset:
    """Element-wise sum of datasets over identical circuit sets."""
    datasets = list(datasets)
    if not datasets:
        raise ValueError("nothing to aggregate")
    first = datasets[0]
    total = first.counts.copy()
    for ds in datasets[1:]:
        if set(ds.keys) != set(first.keys):
            raise ValueError("datasets cover different circuits")
        total += ds.counts[[ds.index_of(k) for k in first.keys]]
    return Dataset(first.circuits, total, {"aggregated": len(datasets), **first.metadata})


@dataclass
class ConsistencyResult:
    statistics: np.ndarray
    pvalues: np.ndarray
    alpha: float
    consistent: bool

    @property
    def min_pvalue(self) -> float:
        return float(self.pvalues.min()) if self.pvalues.size else 1.0


def consistency_test(a: Dataset, b: Dataset, alpha: float = 0.05) -> ConsistencyResult:
    """Two-sample multinomial likelihood-ratio test per circuit.

    Each circuit's statistic compares the two count vectors with their pooled
    distribution and is referred to chi-squared with 3 degrees of freedom.
    The batches are declared consistent unless some circuit's p-value falls
    below ``alpha / n_circuits`` (Bonferroni).
    """
    if set(a.keys) != set(b.keys):
        raise ValueError("datasets cover different circuits")
    nb = b.counts[[b.index_of(k) for k in a.keys]].astype(float)
    na = a.counts.astype(float)
    pooled = (na + nb) / (na.sum(1) + nb.sum(1))[:, None]

    def part(n):
        expected = n.sum(1)[:, None] * pooled
        ratio = np.divide(n, expected, out=np.ones_like(n), where=n > 0)
        return 2.0 * np.sum(n * np.log(ratio), axis=1)

    stat = np.maximum(part(na) + part(nb), 0.0)
    pvals = stats.chi2.sf(stat, 3)
    pvals[stat == 0] = 1.0
    verdict = bool(np.all(pvals >= alpha / max(len(a), 1)))
    return ConsistencyResult(stat, pvals, alpha, verdict)


def write_dataset(ds: Dataset, path) -> None:
    header = {"format": DATASET_FORMAT, "version": 1}
    header.update(ds.metadata)
    lines = [json.dumps(header, sort_keys=False)]
    for key, row in zip(ds.keys, ds.counts):
        counts = {o: int(n) for o, n in zip(OUTCOMES, row)}
        lines.append(json.dumps({"circuit": key, "counts": counts}))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != DATASET_FORMAT:
            raise ValueError(f"{path} is not a dataset file")
        circuits, counts = [], []
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            circuits.append(parse(row["circuit"]))
            counts.append([row["counts"][o] for o in OUTCOMES])
    meta = {k: v for k, v in header.items() if k not in ("format", "version")}
    return Dataset(circuits, np.array(counts, dtype=np.int64).reshape(-1, 4), meta)
