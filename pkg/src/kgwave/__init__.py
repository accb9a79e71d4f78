"""Coupled quadratic Klein-Gordon laboratory on a truncated Fourier lattice.

Library layout:

- lattice: mode bookkeeping, dispersion, resonance moduli, transforms
- kernels: nonlinearity models, pair/triple kernels, cutoffs, effective kernels
- ensemble: correlated Gaussian initial data
- dyson: interaction-picture operators, iterates, Monte Carlo integrators
- diagrams: tree expansion (shapes, signs, colours, decorations, evaluation)
- couplings: paired-tree second moments, Wick oracle, bush combinatorics
- resonant: resonant couplings, reductions, binary-tree bijection, lattice densities
- effective: continuum correlation system, Picard iterates
- experiment: CLI, Monte Carlo versus effective comparisons, reports
"""

__version__ = "0.1.0"
