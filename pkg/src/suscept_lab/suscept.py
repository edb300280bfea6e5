"""The susceptibility estimator stack over posterior chains.

Everything here is a pure function of immutable ChainSamples: per-sample
susceptibilities ``-Cov[phi, l_z - L_n]``, the influence matrix, the loss
kernel, the hybrid restricted/full structural susceptibility, column
standardization, and the empirical complexity observable
``n beta <L_n - L_n(w*)>``. Each estimator has a quadrature-oracle twin
(``quadrature_*``) that computes the same population quantity exactly on
d <= 2 problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .gibbs import ChainSamples, ComponentSpec, FingerprintMismatchError, GibbsProblem
from .mcstats import CovEstimate, covariance_with_se
from .quadrature import GridSpec, posterior_moments, quadrature_covariance

STANDARDIZATION_STATES = ("raw", "column_zscored", "fully_standardized")

#: Degrees-of-freedom convention for the column z-score (recorded in output
#: metadata; sample standard deviation with ddof=1 down each column).
ZSCORE_DDOF = 1


class ZeroVarianceColumnError(RuntimeError):
    """A column of the susceptibility matrix is constant and cannot be z-scored."""

    def __init__(self, label):
        self.label = label
        super().__init__(f"column {label!r} has zero variance; the component "
                         "is dead or its chain is broken")


class WeightSumError(ValueError):
    """Perturbation weights must be non-negative and sum to one."""


@dataclass(frozen=True)
class ObservableSpec:
    """Named observable evaluated per draw on a chain.

    kinds: "per_sample_loss" (query point z'), "excess_loss" (L_n - L_n(w*)),
    "component_loss" (excess loss on a restricted chain), "custom" (callable
    on the (S, d) draw array).
    """

    kind: str
    query: object = None
    component: ComponentSpec | None = None
    fn: object = None

    def __post_init__(self):
        if self.kind not in ("per_sample_loss", "excess_loss",
                             "component_loss", "custom"):
            raise ValueError(f"unknown observable kind {self.kind!r}")

    def values(self, samples: ChainSamples) -> np.ndarray:
        if self.kind == "per_sample_loss":
            return samples.query_losses(self.query)
        if self.kind == "excess_loss":
            ref = samples.problem.empirical_loss(samples.problem.w_star)
            return samples.empirical_losses() - ref
        if self.kind == "component_loss":
            if samples.restriction is None or (
                    self.component is not None
                    and samples.restriction != self.component):
                raise ValueError("component_loss observables are evaluable "
                                 "only against matching restricted chains")
            ref = samples.problem.empirical_loss(samples.problem.w_star)
            return samples.empirical_losses() - ref
        return np.asarray(self.fn(samples.draws), dtype=float)


@dataclass(frozen=True)
class SusceptibilityMatrix:
    """Labeled observables x data matrix of susceptibility estimates."""

    values: np.ndarray
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    standardization: str = "raw"
    renormalized: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValueError("label counts do not match the matrix shape")
        if self.standardization not in STANDARDIZATION_STATES:
            raise ValueError(f"unknown standardization {self.standardization!r}")


@dataclass(frozen=True)
class InfluenceMatrix:
    """Queries x data matrix of centered per-sample loss couplings."""

    values: np.ndarray
    query_labels: tuple[str, ...]
    data_labels: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.query_labels), len(self.data_labels)):
            raise ValueError("label counts do not match the matrix shape")


# ---------------------------------------------------------------------------
# Chain-based estimators
# ---------------------------------------------------------------------------

def per_sample_susceptibility(samples: ChainSamples, phi_values, i: int,
                              return_se: bool = False):
    """``-Cov[phi, l_{z_i} - L_n]`` over the draws, 1/(S-1) normalization.

    ``phi_values`` holds the observable evaluated at each draw. With
    ``return_se`` the batch-means standard error of the estimate is attached.
    """
    if not 0 <= i < samples.problem.n:
        raise ValueError(f"data index {i} out of range")
    centered = samples.per_sample_losses[:, i] - samples.empirical_losses()
    est: CovEstimate = covariance_with_se(phi_values, centered)
    if return_se:
        return -est.value, est.se, est.degenerate
    return -est.value


def influence_matrix(samples: ChainSamples, queries=None, data=None) -> InfluenceMatrix:
    """Entries ``-Cov[l_q - L_n, l_z - L_n]`` for query and data points.

    Defaults to the problem's own dataset on both sides, in which case the
    matrix is exactly symmetric and ``-I`` is a covariance Gram matrix.
    """
    emp = samples.empirical_losses()

    def centered_rows(points, prefix):
        if points is None:
            rows = samples.per_sample_losses.T - emp
            return rows, tuple(f"{prefix}{i}" for i in range(samples.problem.n))
        rows = np.array([samples.query_losses(z) - emp for z in points])
        return rows, tuple(f"{prefix}{i}" for i in range(len(points)))

    q_rows, q_labels = centered_rows(queries, "q")
    if queries is None and data is None:
        d_rows, d_labels = q_rows, tuple(f"z{i}" for i in range(samples.problem.n))
    else:
        d_rows, d_labels = centered_rows(data, "z")

    s = samples.n_draws
    qc = q_rows - q_rows.mean(axis=1, keepdims=True)
    if d_rows is q_rows:
        gram = qc @ qc.T
        values = -(gram + gram.T) / (2.0 * (s - 1))  # exact symmetry
    else:
        dc = d_rows - d_rows.mean(axis=1, keepdims=True)
        values = -(qc @ dc.T) / (s - 1)
    return InfluenceMatrix(values, q_labels, d_labels)


def loss_kernel(samples: ChainSamples, z, z_prime, w_star=None) -> float:
    """Covariance of ``l_z - l_z(w*)`` and ``l_z' - l_z'(w*)`` over draws.

    The w*-offsets are constants and cancel; they are subtracted anyway when
    ``w_star`` is supplied so the kernel reads as stated.
    """
    f = samples.query_losses(z)
    g = samples.query_losses(z_prime)
    if w_star is not None:
        w = np.asarray(w_star, dtype=float)[None, :]
        f = f - float(samples.problem.model.loss_on_grid(w, z)[0])
        g = g - float(samples.problem.model.loss_on_grid(w, z_prime)[0])
    return covariance_with_se(f, g).value


def llc_estimate(samples: ChainSamples, problem: GibbsProblem) -> float:
    """Empirical complexity ``n beta <L_n(w) - L_n(w*)>`` over the draws."""
    ref = problem.empirical_loss(problem.w_star)
    return float(problem.n_beta * (samples.empirical_losses() - ref).mean())


def structural_susceptibility(restricted, full: ChainSamples,
                              data=None) -> SusceptibilityMatrix:
    """Hybrid restricted/full estimate of the component susceptibility matrix.

    ``restricted`` is a sequence of component-restricted chains (one per
    component, each carrying its ComponentSpec); ``full`` is an unrestricted
    chain of the same problem. Entry (j, k) combines the restricted-chain
    average of ``-[L_n(u*,v) - L_n(w*)] [l_{z_k}(u*,v) - L_n(u*,v)]`` with
    the full-chain baseline ``<l_{z_k} - L_n>``; the uncomputed partition
    function ratio leaves the rows renormalized (flag set).
    """
    restricted = list(restricted)
    if not restricted:
        raise ValueError("at least one restricted chain is required")
    for ch in restricted:
        if ch.restriction is None:
            raise ValueError("restricted chains must carry a ComponentSpec")
        if ch.fingerprint != full.fingerprint:
            raise FingerprintMismatchError(
                f"restricted chain {ch.restriction.name!r} fingerprint "
                f"{ch.fingerprint} != full chain fingerprint {full.fingerprint}")
    problem = full.problem
    if data is None:
        data = list(range(problem.n))
    data = [int(k) for k in data]

    ref = problem.empirical_loss(problem.w_star)
    base_emp = full.empirical_losses()
    baseline = np.array([
        (full.per_sample_losses[:, k] - base_emp).mean() for k in data
    ])

    rows = []
    for ch in restricted:
        excess = ch.empirical_losses() - ref
        emp = ch.empirical_losses()
        centered = ch.per_sample_losses[:, data] - emp[:, None]
        first = -(excess[None, :] @ centered).ravel() / ch.n_draws
        rows.append(first + excess.mean() * baseline)
    values = np.array(rows)

    return SusceptibilityMatrix(
        values,
        tuple(ch.restriction.name for ch in restricted),
        tuple(f"z{k}" for k in data),
        standardization="raw",
        renormalized=True,
        metadata={
            "fingerprint": full.fingerprint,
            "restricted_draws": [ch.n_draws for ch in restricted],
            "full_draws": full.n_draws,
            "data_indices": data,
        },
    )


def susceptibility_from_density(per_sample, q_prime) -> float:
    """Susceptibility of an arbitrary perturbation from per-sample values.

    ``q_prime`` is a probability vector over the data points; the result is
    the q'-weighted average of the per-sample susceptibilities.
    """
    per_sample = np.asarray(per_sample, dtype=float)
    q = np.asarray(q_prime, dtype=float)
    if q.shape != per_sample.shape:
        raise WeightSumError("q' must assign one weight per data point")
    if np.any(q < -1e-12):
        raise WeightSumError("q' weights must be non-negative")
    total = float(q.sum())
    if abs(total - 1.0) > 1e-8:
        raise WeightSumError(f"q' weights must sum to 1, got {total!r}")
    return float(np.dot(q, per_sample))


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

def standardize(matrix: SusceptibilityMatrix) -> SusceptibilityMatrix:
    """Column z-scoring followed by row mean-centering.

    Columns are z-scored with the sample (ddof=1) standard deviation, which
    absorbs any positive per-column scaling and per-column shifts of the raw
    matrix; rows are then mean-centered. The composite is applied exactly
    once in the standard pipeline; reapplying it keeps columns mean-zero.
    """
    values = matrix.values
    means = values.mean(axis=0)
    stds = values.std(axis=0, ddof=ZSCORE_DDOF)
    for j, s in enumerate(stds):
        if s == 0.0 or not np.isfinite(s):
            raise ZeroVarianceColumnError(matrix.col_labels[j])
    z = (values - means) / stds
    out = z - z.mean(axis=1, keepdims=True)
    meta = dict(matrix.metadata)
    meta["zscore_ddof"] = ZSCORE_DDOF
    return replace(matrix, values=out, standardization="fully_standardized",
                   metadata=meta)


# ---------------------------------------------------------------------------
# Quadrature-oracle twins (exact on d <= 2 problems)
# ---------------------------------------------------------------------------

def _loss_obs(problem, i):
    return lambda W: problem.per_sample_loss_on_grid(W, i)


def quadrature_per_sample_susceptibility(problem: GibbsProblem, phi, i: int,
                                         grid: GridSpec | None = None) -> float:
    """Oracle for :func:`per_sample_susceptibility`: ``-Cov[phi, l_i - L_n]``."""
    def centered(W):
        return problem.per_sample_loss_on_grid(W, i) - problem.empirical_loss_on_grid(W)
    return -quadrature_covariance(problem, phi, centered, grid)


def quadrature_loss_kernel(problem: GibbsProblem, z, z_prime,
                           grid: GridSpec | None = None) -> float:
    """Oracle for :func:`loss_kernel` (w*-offsets drop from the covariance)."""
    f = lambda W: problem.model.loss_on_grid(W, z)
    g = lambda W: problem.model.loss_on_grid(W, z_prime)
    return quadrature_covariance(problem, f, g, grid)


def quadrature_influence_entry(problem: GibbsProblem, query, z,
                               grid: GridSpec | None = None) -> float:
    """Oracle for one influence-matrix entry ``-Cov[l_q - L_n, l_z - L_n]``."""
    emp = problem.empirical_loss_on_grid
    f = lambda W: problem.model.loss_on_grid(W, query) - emp(W)
    g = lambda W: problem.model.loss_on_grid(W, z) - emp(W)
    return -quadrature_covariance(problem, f, g, grid)


def quadrature_structural_susceptibility(problem: GibbsProblem,
                                         component: ComponentSpec, i: int,
                                         grid_restricted: GridSpec | None = None,
                                         grid_full: GridSpec | None = None) -> float:
    """Oracle for one entry of :func:`structural_susceptibility`.

    The restricted expectations integrate over the component slice
    ``u = u*``; the baseline term integrates over the full posterior.
    """
    ref = problem.empirical_loss(problem.w_star)

    def excess(W):
        return problem.empirical_loss_on_grid(W) - ref

    def centered(W):
        return problem.per_sample_loss_on_grid(W, i) - problem.empirical_loss_on_grid(W)

    def product(W):
        return excess(W) * centered(W)

    e_prod, e_excess = posterior_moments(problem, [product, excess],
                                         grid_restricted, restriction=component)
    e_base = posterior_moments(problem, [centered], grid_full)[0]
    return -e_prod + e_excess * e_base
