"""Metropolis-Hastings sampling of the masked Ising lattice.

One sweep proposes a single-spin flip at every unmasked site in a fixed
raster scan; each proposal is accepted with probability
``min(1, exp(-beta * dH))`` where ``dH`` involves the site's unmasked
neighbors only. Chains are deterministic functions of their seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .lattice import SpinLattice
from .streams import substream

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None


def _sweep_loop(spins, nbrs, counts, free, beta_j, uniforms, thin, out):
    """Run ``uniforms.shape[0]`` raster sweeps in place.

    When ``thin > 0``, a snapshot of the spins is copied into ``out`` after
    every ``thin``-th sweep. Uniform variates are consumed one per proposal,
    in scan order, so the python and jitted paths are bit-identical.
    """
    n_sweeps = uniforms.shape[0]
    n_free = free.shape[0]
    snap = 0
    for s in range(n_sweeps):
        for k in range(n_free):
            site = free[k]
            acc = 0
            for q in range(counts[site]):
                acc += spins[nbrs[site, q]]
            d_h = 2.0 * beta_j * spins[site] * acc
            if uniforms[s, k] < np.exp(-d_h):
                spins[site] = -spins[site]
        if thin > 0 and (s + 1) % thin == 0:
            for i in range(spins.shape[0]):
                out[snap, i] = spins[i]
            snap += 1
    return snap


if njit is not None:
    _sweep_loop = njit(cache=True, nogil=True)(_sweep_loop)


@dataclass(frozen=True)
class IsingChainConfig:
    """Chain-length parameters for one Metropolis run.

    Defaults follow the experiment setup: 2,000 burn-in sweeps, 20,000
    retained samples, thinning of 5 sweeps between samples.
    """

    beta: float
    burn_in_sweeps: int = 2000
    samples: int = 20000
    thinning_sweeps: int = 5
    seed: int = 0

    def __post_init__(self):
        # beta = 0 (infinite temperature) is allowed: every proposal accepts.
        if not self.beta >= 0:
            raise ValueError("beta must be >= 0")
        if self.burn_in_sweeps < 0:
            raise ValueError("burn_in_sweeps must be >= 0")
        if self.samples <= 0:
            raise ValueError("samples must be > 0")
        if self.thinning_sweeps < 1:
            raise ValueError("thinning_sweeps must be >= 1")


class IsingChain:
    """Ordered snapshots from one Metropolis chain on a fixed geometry."""

    def __init__(self, template: SpinLattice, snapshots: np.ndarray,
                 config: IsingChainConfig, init: str):
        self.template = template
        self.snapshots = snapshots
        self.config = config
        self.init = init

    def __len__(self) -> int:
        return self.snapshots.shape[0]

    def __getitem__(self, i: int) -> SpinLattice:
        return self.template.with_spins(self.snapshots[i])

    def magnetizations(self, region=None) -> np.ndarray:
        """Per-snapshot magnetization of ``region`` (or all unmasked sites)."""
        if region is None:
            cols = self.template.free_sites
        else:
            cols = np.asarray(region.sites, dtype=np.int64)
        return self.snapshots[:, cols].sum(axis=1, dtype=np.int64).astype(float)

    def site_values(self, site: int) -> np.ndarray:
        """Per-snapshot value of the spin at ``site``."""
        return self.snapshots[:, int(site)].astype(float)


def metropolis_sweep(lattice: SpinLattice, beta: float, rng: np.random.Generator) -> SpinLattice:
    """One full raster sweep; returns a new lattice, the input is untouched."""
    if not beta >= 0:
        raise ValueError("beta must be >= 0")
    out = lattice.copy()
    uniforms = rng.random((1, lattice.n_free))
    none = np.empty((0, lattice.n_sites), dtype=np.int8)
    _sweep_loop(out.spins, out.neighbors, out.neighbor_counts, out.free_sites,
                beta * out.coupling, uniforms, 0, none)
    return out


# Sweeps per kernel call; bounds the uniform-variate buffer to a few MB.
_MAX_SWEEPS_PER_CALL = 1024


def sample_chain(lattice: SpinLattice, config: IsingChainConfig,
                 init: str = "as_given") -> IsingChain:
    """Run one seeded chain and return thinned post-burn-in snapshots.

    ``init`` is one of "as_given" (start from ``lattice.spins``), "random"
    (uniform +/-1 from the chain's own stream) or "all_up".
    """
    if init not in ("as_given", "random", "all_up"):
        raise ValueError(f"unknown init mode {init!r}")
    rng = substream(config.seed, "ising-chain")
    work = lattice.copy()
    if init == "random":
        work.spins[:] = rng.choice(np.array([-1, 1], dtype=np.int8),
                                   size=work.n_sites)
    elif init == "all_up":
        work.spins[:] = 1

    spins = work.spins
    nbrs, counts, free = work.neighbors, work.neighbor_counts, work.free_sites
    beta_j = config.beta * work.coupling
    n_free = free.size
    no_out = np.empty((0, work.n_sites), dtype=np.int8)

    remaining = config.burn_in_sweeps
    while remaining > 0:
        chunk = min(remaining, _MAX_SWEEPS_PER_CALL)
        uniforms = rng.random((chunk, n_free))
        _sweep_loop(spins, nbrs, counts, free, beta_j, uniforms, 0, no_out)
        remaining -= chunk

    thin = config.thinning_sweeps
    snaps = np.empty((config.samples, work.n_sites), dtype=np.int8)
    done = 0
    per_call = max(1, _MAX_SWEEPS_PER_CALL // thin)
    while done < config.samples:
        take = min(config.samples - done, per_call)
        uniforms = rng.random((take * thin, n_free))
        _sweep_loop(spins, nbrs, counts, free, beta_j, uniforms, thin,
                    snaps[done:done + take])
        done += take

    return IsingChain(lattice.with_spins(lattice.spins), snaps, config, init)


def chain_config_at(config: IsingChainConfig, beta: float, seed: int) -> IsingChainConfig:
    """Copy of ``config`` rebound to one (beta, seed) point of a sweep."""
    return replace(config, beta=beta, seed=seed)
