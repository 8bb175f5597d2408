"""Batched forward/backward propagation of many circuits through a layer set.

GST circuits share long prefixes (the same preparation fiducial and germ
powers recur under many measurement fiducials), so the circuits are stored
as a prefix tree and every distinct prefix state is computed once.  Nodes
are processed depth by depth; at each depth the nodes reached by layer
``l`` are gathered and multiplied by that layer's matrix.  The backward pass
returns gradients of a scalar objective with respect to the nine layer
matrices, the initial state and the POVM effects.
"""
from __future__ import annotations

import numpy as np

from .circuits import Circuit


class CircuitBatch:
    def __init__(self, circuits: list[Circuit], n_layers: int = 9):
        self.n = len(circuits)
        self.n_layers = n_layers
        children = {}
        parent, layer, depth = [-1], [-1], [0]
        leaves = np.zeros(self.n, dtype=int)
        for i, c in enumerate(circuits):
            node = 0
            for l in c.indices():
                key = (node, l)
                nxt = children.get(key)
                if nxt is None:
                    nxt = len(parent)
                    children[key] = nxt
                    parent.append(node)
                    layer.append(l)
                    depth.append(depth[node] + 1)
                node = nxt
            leaves[i] = node
        self.leaves = leaves
        self.n_nodes = len(parent)
        parent, layer, depth = np.array(parent), np.array(layer), np.array(depth)
        self.depths = depth[leaves] if self.n else np.zeros(0, dtype=int)
        self.tmax = int(depth.max())
        # steps[t] = [(layer, nodes, parents), ...] for nodes at depth t + 1.
        # Within one entry the parents are distinct, since a parent has at
        # most one child per layer.
        self.steps = []
        for t in range(1, self.tmax + 1):
            at = depth == t
            entries = []
            for l in range(n_layers):
                nodes = np.flatnonzero(at & (layer == l))
                if nodes.size:
                    entries.append((l, nodes, parent[nodes]))
            self.steps.append(entries)

    def forward(self, layers: np.ndarray, rho: np.ndarray, povm: np.ndarray, keep: bool = False):
        """Outcome probabilities, shape ``(n_circuits, n_outcomes)``."""
        states = np.empty((self.n_nodes, rho.shape[0]))
        states[0] = rho
        for entries in self.steps:
            for l, nodes, parents in entries:
                states[nodes] = states[parents] @ layers[l].T
        if keep:
            self._states = states
        return states[self.leaves] @ povm.T

    def backward(self, layers: np.ndarray, povm: np.ndarray, dprobs: np.ndarray):
        """Gradients given ``dprobs = d(objective)/d(probs)`` from the last ``forward(keep=True)``."""
        states = self._states
        dpovm = dprobs.T @ states[self.leaves]
        cov = np.zeros_like(states)
        np.add.at(cov, self.leaves, dprobs @ povm)
        dlayers = np.zeros_like(layers)
        for entries in reversed(self.steps):
            for l, nodes, parents in entries:
                u = cov[nodes]
                dlayers[l] += u.T @ states[parents]
                cov[parents] += u @ layers[l]
        return dlayers, cov[0].copy(), dpovm
