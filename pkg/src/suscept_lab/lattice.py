"""Masked square-lattice Ising model: geometry, energy, regional observables.

The configuration space is a ``side x side`` grid of +/-1 spins with
Hamiltonian ``H = -J * sum_{<ij>} s_i s_j`` over unordered nearest-neighbor
pairs. Sites listed in the mask carry no couplings at all: they are excluded
from every neighbor sum, so a line of masked sites acts as an internal wall.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BOUNDARY_MODES = ("periodic", "open")


def site_index(row: int, col: int, side: int) -> int:
    """Raster-order site index of grid coordinates (row, col)."""
    return int(row) * side + int(col)


def site_coords(index: int, side: int) -> tuple[int, int]:
    """Grid coordinates (row, col) of a raster-order site index."""
    return divmod(int(index), side)


def _neighbor_table(side: int, masked: np.ndarray, boundary: str):
    """Per-site unmasked neighbor lists, padded with -1 to width 4.

    Neighbors form a set: duplicate coordinates arising from wraparound on
    very small periodic lattices are collapsed, and self-neighbors dropped,
    so every unordered adjacent pair carries exactly one coupling.
    """
    n = side * side
    nbrs = np.full((n, 4), -1, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    for idx in range(n):
        if masked[idx]:
            continue
        r, c = divmod(idx, side)
        seen: list[int] = []
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if boundary == "periodic":
                rr %= side
                cc %= side
            elif not (0 <= rr < side and 0 <= cc < side):
                continue
            j = rr * side + cc
            if j == idx or masked[j] or j in seen:
                continue
            seen.append(j)
        seen.sort()
        counts[idx] = len(seen)
        nbrs[idx, : len(seen)] = seen
    return nbrs, counts


class SpinLattice:
    """Spin configuration on a masked square lattice.

    Parameters
    ----------
    side : linear lattice size L; the grid has L*L sites in raster order.
    spins : length L*L sequence of +/-1 spins (masked entries are kept but
        never enter any coupling).
    mask : iterable of site indices excluded from all couplings.
    boundary : "periodic" or "open".
    coupling : ferromagnetic coupling J; the experiments fix J = 1.
    """

    def __init__(self, side, spins, mask=(), boundary="periodic", coupling=1.0):
        self.side = int(side)
        if self.side < 1:
            raise ValueError("side must be a positive integer")
        n = self.side * self.side
        self.spins = np.asarray(spins, dtype=np.int8).copy()
        if self.spins.shape != (n,):
            raise ValueError(f"spins must have shape ({n},), got {self.spins.shape}")
        self.mask = frozenset(int(i) for i in mask)
        for i in self.mask:
            if not 0 <= i < n:
                raise ValueError(f"mask site {i} out of range for side {self.side}")
        if boundary not in BOUNDARY_MODES:
            raise ValueError(f"boundary must be one of {BOUNDARY_MODES}, got {boundary!r}")
        self.boundary = boundary
        self.coupling = float(coupling)

        self._masked = np.zeros(n, dtype=bool)
        if self.mask:
            self._masked[sorted(self.mask)] = True
        free = ~self._masked
        if not np.all(np.abs(self.spins[free]) == 1):
            raise ValueError("every unmasked spin must be exactly -1 or +1")
        self.free_sites = np.flatnonzero(free).astype(np.int64)
        self.neighbors, self.neighbor_counts = _neighbor_table(
            self.side, self._masked, self.boundary
        )

    @classmethod
    def filled(cls, side, value=1, mask=(), boundary="periodic", coupling=1.0):
        """Lattice with every spin set to ``value`` (+1 or -1)."""
        spins = np.full(side * side, value, dtype=np.int8)
        return cls(side, spins, mask=mask, boundary=boundary, coupling=coupling)

    @classmethod
    def random(cls, side, rng, mask=(), boundary="periodic", coupling=1.0):
        """Lattice with i.i.d. uniform +/-1 spins drawn from ``rng``."""
        spins = rng.choice(np.array([-1, 1], dtype=np.int8), size=side * side)
        return cls(side, spins, mask=mask, boundary=boundary, coupling=coupling)

    @property
    def n_sites(self) -> int:
        return self.side * self.side

    @property
    def n_free(self) -> int:
        return int(self.free_sites.size)

    def is_masked(self, site: int) -> bool:
        return bool(self._masked[site])

    def copy(self) -> "SpinLattice":
        return SpinLattice(
            self.side, self.spins, mask=self.mask, boundary=self.boundary,
            coupling=self.coupling,
        )

    def with_spins(self, spins) -> "SpinLattice":
        """Same geometry, new spin configuration."""
        return SpinLattice(
            self.side, spins, mask=self.mask, boundary=self.boundary,
            coupling=self.coupling,
        )

    def energy(self) -> float:
        """Total energy -J * sum over unordered unmasked adjacent pairs.

        Each pair is counted once; masked sites contribute nothing.
        """
        s = self.spins.astype(np.int64)
        padded = np.concatenate([s, [0]])  # -1 padding indexes the zero slot
        nbr_sum = padded[self.neighbors].sum(axis=1)
        # The directed sum visits every unordered pair exactly twice.
        return float(-0.5 * self.coupling * np.dot(s, nbr_sum))

    def flip_cost(self, site: int) -> float:
        """Energy change of flipping ``site``, from its unmasked neighbors only."""
        if self._masked[site]:
            raise ValueError(f"site {site} is masked and cannot flip")
        s = self.spins.astype(np.int64)
        k = self.neighbor_counts[site]
        nbr_sum = int(s[self.neighbors[site, :k]].sum()) if k else 0
        return float(2.0 * self.coupling * s[site] * nbr_sum)

    def magnetization(self, region: "RegionSpec | None" = None) -> float:
        """Sum of spins over ``region`` (or over all unmasked sites)."""
        if region is None:
            return float(self.spins[self.free_sites].sum())
        return float(self.spins[np.asarray(region.sites, dtype=np.int64)].sum())


@dataclass(frozen=True)
class RegionSpec:
    """Named set of unmasked sites whose total magnetization is observed."""

    name: str
    sites: tuple[int, ...]

    def __post_init__(self):
        sites = tuple(sorted(int(i) for i in self.sites))
        if len(set(sites)) != len(sites):
            raise ValueError(f"region {self.name!r} has duplicate sites")
        object.__setattr__(self, "sites", sites)

    def validate_on(self, lattice: SpinLattice) -> None:
        for i in self.sites:
            if not 0 <= i < lattice.n_sites:
                raise ValueError(f"region {self.name!r}: site {i} out of range")
            if lattice.is_masked(i):
                raise ValueError(f"region {self.name!r}: site {i} is masked")


@dataclass(frozen=True)
class ProbeSet:
    """Ordered list of unmasked probe sites."""

    probes: tuple[int, ...]

    def __post_init__(self):
        probes = tuple(int(i) for i in self.probes)
        if len(set(probes)) != len(probes):
            raise ValueError("probe sites must be distinct")
        object.__setattr__(self, "probes", probes)

    def validate_on(self, lattice: SpinLattice) -> None:
        for i in self.probes:
            if not 0 <= i < lattice.n_sites:
                raise ValueError(f"probe site {i} out of range")
            if lattice.is_masked(i):
                raise ValueError(f"probe site {i} is masked")


def assert_disjoint(regions) -> None:
    """Raise if any two regions share a site."""
    seen: dict[int, str] = {}
    for region in regions:
        for i in region.sites:
            if i in seen:
                raise ValueError(
                    f"regions {seen[i]!r} and {region.name!r} both contain site {i}"
                )
            seen[i] = region.name
