"""The three lattice response experiments: phase curve, wall/probe sweep,
response matrix.

Covariances such as ``chi_L = Cov[M_L, s_p]`` are estimated as plain sample
covariances over the chain with 1/(S-1) normalization; their Monte Carlo
errors come from batch means. Chains above the critical temperature are
started all-up so the simulation stays in one phase sector.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ising_mcmc import IsingChain, IsingChainConfig, chain_config_at, sample_chain
from .lattice import ProbeSet, RegionSpec, SpinLattice, assert_disjoint, site_index
from .mcstats import CovEstimate, batch_means_se, covariance_with_se
from .streams import child_seed

#: Critical inverse temperature of the 2-D square-lattice model.
BETA_CRITICAL = 0.5 * math.log(1.0 + math.sqrt(2.0))


def default_init_for(beta: float) -> str:
    """All-up start above the critical point, random start otherwise."""
    return "all_up" if beta > BETA_CRITICAL else "random"


# ---------------------------------------------------------------------------
# Experiment layouts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WallGapLayout:
    """Periodic lattice split by a vertical masked wall with one gap site.

    The wall occupies the middle column; ``left`` and ``right`` are the two
    halves it separates and ``probe`` is a single site in the left half.
    """

    side: int
    mask: frozenset
    left: RegionSpec
    right: RegionSpec
    gap_site: int
    probe: int

    def lattice(self) -> SpinLattice:
        return SpinLattice.filled(self.side, 1, mask=self.mask, boundary="periodic")


def wall_gap_layout(side: int = 20, gap_row: int | None = None,
                    probe_row: int | None = None,
                    probe_col: int | None = None) -> WallGapLayout:
    """Layout of the wall/probe sweep on a ``side x side`` periodic lattice.

    The default probe sits in the left half near the wall but off the gap
    row and away from the wraparound column: both leakage paths into the
    right half are then weak until the correlation length diverges, which is
    what makes the chi_L/chi_R peak resolvable at finite sample size.
    """
    if side < 6:
        raise ValueError("wall/gap layout needs side >= 6")
    wall_col = side // 2
    if gap_row is None:
        gap_row = side // 2
    if probe_row is None:
        probe_row = side // 2 - 4
    if probe_col is None:
        probe_col = wall_col - 2
    mask = frozenset(
        site_index(r, wall_col, side) for r in range(side) if r != gap_row
    )
    left = RegionSpec("L", tuple(
        site_index(r, c, side) for r in range(side) for c in range(wall_col)
    ))
    right = RegionSpec("R", tuple(
        site_index(r, c, side) for r in range(side)
        for c in range(wall_col + 1, side)
    ))
    probe = site_index(probe_row, probe_col, side)
    layout = WallGapLayout(side, mask, left, right,
                           site_index(gap_row, wall_col, side), probe)
    lat = layout.lattice()
    left.validate_on(lat)
    right.validate_on(lat)
    assert_disjoint([left, right])
    if probe not in set(left.sites):
        raise ValueError("probe must lie in the left region")
    return layout


@dataclass(frozen=True)
class ThreeRegionLayout:
    """Open lattice with masked edges and a horizontal half-wall.

    The wall splits the right half into regions B (top) and C (bottom);
    region A is the open left half that mediates between them. Two probe
    sites sit in each region.
    """

    side: int
    mask: frozenset
    regions: tuple[RegionSpec, RegionSpec, RegionSpec]
    probes: ProbeSet
    probe_labels: tuple[str, ...]

    def lattice(self) -> SpinLattice:
        return SpinLattice.filled(self.side, 1, mask=self.mask, boundary="open")


def three_region_layout(side: int = 20,
                        probe_coords: dict[str, tuple[int, int]] | None = None
                        ) -> ThreeRegionLayout:
    """Layout of the response-matrix experiment (defaults: 20 x 20 grid,
    edge sites masked, wall at row 10 spanning columns 10-18)."""
    if side != 20:
        raise ValueError("the response-matrix layout is defined on a 20x20 grid")
    wall_row, wall_cols = 10, range(10, 19)
    mask = set()
    for r in range(side):
        for c in range(side):
            if r in (0, side - 1) or c in (0, side - 1):
                mask.add(site_index(r, c, side))
    for c in wall_cols:
        mask.add(site_index(wall_row, c, side))
    mask = frozenset(mask)

    region_a = RegionSpec("A", tuple(
        site_index(r, c, side) for r in range(1, side - 1) for c in range(1, 10)
    ))
    region_b = RegionSpec("B", tuple(
        site_index(r, c, side) for r in range(1, 10) for c in range(10, side - 1)
    ))
    region_c = RegionSpec("C", tuple(
        site_index(r, c, side) for r in range(11, side - 1) for c in range(10, side - 1)
    ))

    # Default probes: one per region half for A (so the two A probes see
    # different neighbors), and wall-remote interior sites for B and C where
    # the cross-wall coupling is a few percent of the own-region coupling.
    if probe_coords is None:
        probe_coords = {
            "A1": (3, 6), "A2": (17, 7),
            "B1": (4, 15), "B2": (7, 17),
            "C1": (15, 17), "C2": (17, 16),
        }
    labels = tuple(probe_coords)
    probes = ProbeSet(tuple(site_index(r, c, side) for r, c in probe_coords.values()))

    layout = ThreeRegionLayout(side, mask, (region_a, region_b, region_c),
                               probes, labels)
    lat = layout.lattice()
    for region in layout.regions:
        region.validate_on(lat)
    assert_disjoint(layout.regions)
    probes.validate_on(lat)
    by_region = {name: set(region.sites) for name, region in
                 zip("ABC", layout.regions)}
    for label, site in zip(labels, probes.probes):
        if site not in by_region[label[0]]:
            raise ValueError(f"probe {label} does not lie in region {label[0]}")
    return layout


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _map_ordered(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _chain_at(template: SpinLattice, config: IsingChainConfig, beta: float,
              seed: int, stream: str, init: str | None = None) -> IsingChain:
    cfg = chain_config_at(config, beta, child_seed(seed, stream, f"beta={beta:.6f}"))
    return sample_chain(template, cfg, init=init or default_init_for(beta))


@dataclass(frozen=True)
class PhasePoint:
    beta: float
    order_parameter: float
    std_error: float


def order_parameter_curve(betas, template: SpinLattice, config: IsingChainConfig,
                          seed: int = 0, threads: int = 1) -> list[PhasePoint]:
    """Estimate <|M|>/N over a sorted list of inverse temperatures.

    Each beta gets an independent chain on its own named stream; results are
    returned in beta order regardless of execution order.
    """
    betas = [float(b) for b in betas]
    if betas != sorted(betas) or any(b < 0 for b in betas):
        raise ValueError("betas must be sorted and non-negative")
    n_free = template.n_free

    def one(beta: float) -> PhasePoint:
        chain = _chain_at(template, config, beta, seed, "phase")
        m = np.abs(chain.magnetizations()) / n_free
        return PhasePoint(beta, float(m.mean()), batch_means_se(m))

    return _map_ordered(one, betas, threads)


@dataclass(frozen=True)
class SweepPoint:
    beta: float
    chi_left: float
    chi_left_se: float
    chi_right: float
    chi_right_se: float
    ratio: float          # nan when not reportable
    ratio_valid: bool
    degenerate: bool


def susceptibility_sweep(betas, layout: WallGapLayout, config: IsingChainConfig,
                         seed: int = 0, threads: int = 1,
                         noise_floor: float = 3.0) -> list[SweepPoint]:
    """chi_L, chi_R and their ratio across temperatures for the wall layout.

    The ratio is reported only where |chi_R| exceeds ``noise_floor`` times
    its batch-means standard error.
    """
    betas = [float(b) for b in betas]
    template = layout.lattice()

    def one(beta: float) -> SweepPoint:
        chain = _chain_at(template, config, beta, seed, "sweep")
        probe = chain.site_values(layout.probe)
        left = covariance_with_se(chain.magnetizations(layout.left), probe)
        right = covariance_with_se(chain.magnetizations(layout.right), probe)
        degenerate = left.degenerate or right.degenerate
        valid = (not degenerate) and abs(right.value) > noise_floor * right.se
        ratio = left.value / right.value if valid else float("nan")
        return SweepPoint(beta, left.value, left.se, right.value, right.se,
                          ratio, valid, degenerate)

    return _map_ordered(one, betas, threads)


@dataclass(frozen=True)
class ResponseMatrix:
    """Probe-by-region covariance matrix chi[p, alpha] = Cov[s_p, M_alpha]."""

    beta: float
    values: np.ndarray
    std_errors: np.ndarray
    probe_labels: tuple[str, ...]
    region_names: tuple[str, ...]

    def entry(self, probe_label: str, region_name: str) -> float:
        return float(self.values[self.probe_labels.index(probe_label),
                                 self.region_names.index(region_name)])


def response_matrix(beta: float, layout: ThreeRegionLayout,
                    config: IsingChainConfig, seed: int = 0) -> ResponseMatrix:
    """Estimate the probes x regions response matrix at one temperature."""
    template = layout.lattice()
    chain = _chain_at(template, config, beta, seed, "response")
    mags = [chain.magnetizations(region) for region in layout.regions]
    n_p, n_r = len(layout.probes.probes), len(layout.regions)
    values = np.empty((n_p, n_r))
    errors = np.empty((n_p, n_r))
    for i, site in enumerate(layout.probes.probes):
        probe = chain.site_values(site)
        for j, m in enumerate(mags):
            est: CovEstimate = covariance_with_se(probe, m)
            values[i, j] = est.value
            errors[i, j] = est.se
    return ResponseMatrix(beta, values, errors, layout.probe_labels,
                          tuple(r.name for r in layout.regions))
