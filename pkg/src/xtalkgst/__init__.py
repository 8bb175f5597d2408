"""Gate-set tomography tools for detecting and characterizing two-qubit crosstalk.

Submodules:

``superop``   Pauli-transfer-matrix algebra, Choi matrices, exp/log.
``errorgen``  Hamiltonian/stochastic error generators; build and decompose gates.
``circuits``  circuit grammar, GST experiment design, simultaneous-RB sampling.
``models``    crosstalk-free, context-dependent and general gate-set models.
``noise``     ground-truth noise descriptions for simulation.
``simulate``  batched simulation, seeded sampling, datasets.
``fit``       maximum-likelihood fits, Wilks statistics, bootstrap.
``select``    evidence ratios, wildcard error, diamond distance, model selection.
``rb``        randomized-benchmarking decay analysis.
``report``    JSON reports and SVG figures.
"""

__version__ = "0.1.0"
