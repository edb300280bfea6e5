"""suscept-lab: a numerical laboratory for Gibbs-posterior susceptibilities.

Subsystems:

- ``lattice`` / ``ising_mcmc`` / ``ising_experiments``: masked-lattice Ising
  model, Metropolis sampling, and the wall/probe response experiments.
- ``models`` / ``gibbs`` / ``quadrature``: toy parametric losses, tempered
  Gibbs posteriors via SGLD, and a deterministic quadrature oracle (d <= 2).
- ``suscept``: the empirical estimator stack (per-sample susceptibilities,
  influence matrix, loss kernel, structural susceptibility, standardization).
- ``laplace``: closed-form Laplace-expansion asymptotics and a Wick/Isserlis
  Gaussian-moment engine.
- ``patterning``: SVD modes, pseudo-inverse and ridge-regularized solutions
  of the data-patterning inverse problem, batch reweighting.
- ``cli`` / ``runners``: the ``suscept-lab`` experiment runner.
"""

__version__ = "0.1.0"
