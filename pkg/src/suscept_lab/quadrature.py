"""Deterministic grid quadrature for d <= 2 Gibbs posteriors.

This is the exact oracle every Monte Carlo estimator is checked against:
expectations ``int phi e^{-n beta L^h} pi / int e^{-n beta L^h} pi`` computed
by composite trapezoid rules on (optionally refined) uniform grids, where
``L^h = (1-h) L + h L'`` mixes in a probe loss and ``pi`` is the Gaussian
localizer ``exp(-gamma |w - w*|^2 / 2)`` (flat when gamma = 0).

Integrands here are analytic and decay like Gaussians, so the trapezoid rule
converges superalgebraically once the grid resolves the posterior scale; the
refinement loop and the boundary-mass guard turn silent under-resolution
into hard errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gibbs import ComponentSpec, GibbsProblem


class BoundaryMassError(RuntimeError):
    """Too much posterior mass sits in the outermost grid cells."""


class QuadratureError(RuntimeError):
    """Grid refinement failed to reach the requested tolerance."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid over the free coordinates: (lo, hi, points) per axis."""

    axes: tuple[tuple[float, float, int], ...]

    def __post_init__(self):
        if not 1 <= len(self.axes) <= 2:
            raise ValueError("quadrature supports 1 or 2 free dimensions")
        for lo, hi, n in self.axes:
            if not (hi > lo and n >= 3):
                raise ValueError(f"bad grid axis ({lo}, {hi}, {n})")

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def axis_points(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, int(n)) for lo, hi, n in self.axes]

    def points(self) -> np.ndarray:
        """Flattened grid points, shape (prod(n_i), ndim)."""
        axes = self.axis_points()
        if self.ndim == 1:
            return axes[0][:, None]
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def weights(self) -> np.ndarray:
        """Trapezoid weights matching :meth:`points`."""
        parts = []
        for lo, hi, n in self.axes:
            h = (hi - lo) / (int(n) - 1)
            w = np.full(int(n), h)
            w[0] = w[-1] = 0.5 * h
            parts.append(w)
        if self.ndim == 1:
            return parts[0]
        return np.outer(parts[0], parts[1]).ravel()

    def boundary_mask(self) -> np.ndarray:
        """True at points lying on the outermost layer of the grid."""
        masks = []
        for lo, hi, n in self.axes:
            m = np.zeros(int(n), dtype=bool)
            m[0] = m[-1] = True
            masks.append(m)
        if self.ndim == 1:
            return masks[0]
        mx, my = np.meshgrid(masks[0], masks[1], indexing="ij")
        return (mx | my).ravel()

    def refined(self) -> "GridSpec":
        """Same range, doubled resolution (2n - 1 points per axis)."""
        return GridSpec(tuple((lo, hi, 2 * int(n) - 1) for lo, hi, n in self.axes))


def _free_indices(problem: GibbsProblem, restriction: ComponentSpec | None):
    if restriction is None:
        return np.arange(problem.dim)
    idx = np.array(restriction.indices)
    if idx[-1] >= problem.dim:
        raise ValueError(f"component index {idx[-1]} out of range")
    return idx


def _full_points(problem, restriction, pts):
    """Embed grid points over the free coordinates into full parameter space."""
    if restriction is None:
        return pts
    free = _free_indices(problem, restriction)
    full = np.tile(problem.w_star, (pts.shape[0], 1))
    full[:, free] = pts
    return full


def _find_center(problem, restriction, h, probe_loss):
    """Mode of the target on the free coordinates, by damped Newton steps."""
    free = _free_indices(problem, restriction)

    def objective(x):
        w = problem.w_star.copy()
        w[free] = x
        val = problem.n_beta * problem.empirical_loss(w)
        if h != 0.0 and probe_loss is not None:
            val = (1.0 - h) * val + h * problem.n_beta * float(
                probe_loss(w[None, :])[0])
        return val + 0.5 * problem.gamma * float(np.sum((x - problem.w_star[free]) ** 2))

    x = problem.w_star[free].astype(float).copy()
    for _ in range(60):
        g = _numeric_grad(objective, x)
        hess = _numeric_hess(objective, x)
        try:
            step = np.linalg.solve(hess + 1e-12 * np.eye(x.size), g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        # backtrack to keep the objective non-increasing
        f0 = objective(x)
        scale = 1.0
        for _ in range(30):
            xn = x - scale * step
            if objective(xn) <= f0 + 1e-12:
                break
            scale *= 0.5
        if np.max(np.abs(scale * step)) < 1e-12 * (1.0 + np.max(np.abs(x))):
            x = xn
            break
        x = xn
    return x


def _numeric_grad(fn, x, eps=1e-5):
    g = np.empty(x.size)
    for i in range(x.size):
        step = eps * (1.0 + abs(x[i]))
        e = np.zeros(x.size); e[i] = step
        g[i] = (fn(x + e) - fn(x - e)) / (2 * step)
    return g


def _numeric_hess(fn, x, eps=1e-4):
    d = x.size
    hess = np.empty((d, d))
    for i in range(d):
        si = eps * (1.0 + abs(x[i]))
        ei = np.zeros(d); ei[i] = si
        hess[i, i] = (fn(x + ei) - 2 * fn(x) + fn(x - ei)) / si**2
        for j in range(i + 1, d):
            sj = eps * (1.0 + abs(x[j]))
            ej = np.zeros(d); ej[j] = sj
            hess[i, j] = hess[j, i] = (
                fn(x + ei + ej) - fn(x + ei - ej) - fn(x - ei + ej)
                + fn(x - ei - ej)) / (4 * si * sj)
    return hess


def auto_grid(problem: GibbsProblem, restriction: ComponentSpec | None = None,
              *, h: float = 0.0, probe_loss=None, span: float = 16.0,
              points_per_sigma: float = 12.0) -> GridSpec:
    """Grid centered at the posterior mode, spanning ``span`` local sigmas.

    The local scale per axis comes from the curvature of
    ``n beta L^h + gamma |.|^2 / 2`` at the mode.
    """
    free = _free_indices(problem, restriction)
    center = _find_center(problem, restriction, h, probe_loss)

    def objective(x):
        w = problem.w_star.copy()
        w[free] = x
        base = problem.empirical_loss(w)
        if h != 0.0 and probe_loss is not None:
            base = (1.0 - h) * base + h * float(probe_loss(w[None, :])[0])
        return problem.n_beta * base + 0.5 * problem.gamma * float(
            np.sum((x - problem.w_star[free]) ** 2))

    hess = _numeric_hess(objective, center)
    lam_min = float(np.linalg.eigvalsh(hess).min())
    if lam_min <= 0:
        raise QuadratureError("target is not locally convex at its mode; "
                              "supply an explicit GridSpec")
    axes = []
    for i in range(free.size):
        sigma = 1.0 / np.sqrt(max(hess[i, i], lam_min))
        half = span * sigma
        n = int(2 * round(span * points_per_sigma)) + 1
        axes.append((float(center[i] - half), float(center[i] + half), n))
    return GridSpec(tuple(axes))


def _log_density(problem, restriction, grid_pts, h, probe_loss):
    full = _full_points(problem, restriction, grid_pts)
    base = problem.empirical_loss_on_grid(full)
    if h != 0.0:
        if probe_loss is None:
            raise ValueError("a probe loss is required when h != 0")
        base = (1.0 - h) * base + h * probe_loss(full)
    logp = -problem.n_beta * base
    if problem.gamma > 0:
        free = _free_indices(problem, restriction)
        delta = grid_pts - problem.w_star[free]
        logp = logp - 0.5 * problem.gamma * np.sum(delta * delta, axis=1)
    return logp, full


def _moments_on_grid(problem, observables, grid, h, probe_loss, restriction,
                     boundary_tol):
    pts = grid.points()
    logp, full = _log_density(problem, restriction, pts, h, probe_loss)
    p = np.exp(logp - logp.max()) * grid.weights()
    total = p.sum()
    if not np.isfinite(total) or total <= 0:
        raise QuadratureError("posterior mass vanished on the grid")
    edge = p[grid.boundary_mask()].sum()
    if edge > boundary_tol * total:
        raise BoundaryMassError(
            f"{edge / total:.2e} of the unnormalized mass lies in the outermost "
            f"grid cells (tolerance {boundary_tol:.0e}); widen the grid")
    out = []
    scales = []
    for obs in observables:
        values = np.asarray(obs(full), dtype=float)
        out.append(float(np.dot(p, values) / total))
        scales.append(float(np.sqrt(np.dot(p, values * values) / total)))
    return out, scales


def posterior_moments(problem: GibbsProblem, observables, grid: GridSpec | None = None,
                      *, h: float = 0.0, probe_loss=None,
                      restriction: ComponentSpec | None = None,
                      rel_tol: float = 1e-9, max_refinements: int = 3,
                      boundary_tol: float = 1e-8) -> list[float]:
    """Expectations of several observables under one quadrature density.

    Observables are callables mapping an (m, d) array of full parameter
    points to (m,) values. The grid is refined (resolution doubled) until
    every expectation is stable to ``rel_tol`` relative to its own rms scale.
    """
    if grid is None:
        grid = auto_grid(problem, restriction, h=h, probe_loss=probe_loss)
    vals, scales = _moments_on_grid(problem, observables, grid, h, probe_loss,
                                    restriction, boundary_tol)
    for _ in range(max_refinements):
        grid = grid.refined()
        new, scales = _moments_on_grid(problem, observables, grid, h, probe_loss,
                                       restriction, boundary_tol)
        worst = max(abs(n - v) / max(abs(n), s, 1e-300)
                    for n, v, s in zip(new, vals, scales))
        vals = new
        if worst <= rel_tol:
            return vals
    raise QuadratureError(f"no convergence to rel_tol={rel_tol:g} after "
                          f"{max_refinements} refinements (worst {worst:.2e})")


def quadrature_expectation(problem: GibbsProblem, observable,
                           grid: GridSpec | None = None, *, h: float = 0.0,
                           probe_loss=None, restriction: ComponentSpec | None = None,
                           **kwargs) -> float:
    """Posterior expectation of one observable; see :func:`posterior_moments`."""
    return posterior_moments(problem, [observable], grid, h=h,
                             probe_loss=probe_loss, restriction=restriction,
                             **kwargs)[0]


def quadrature_covariance(problem: GibbsProblem, f, g,
                          grid: GridSpec | None = None, *, h: float = 0.0,
                          probe_loss=None, restriction: ComponentSpec | None = None,
                          **kwargs) -> float:
    """Posterior covariance Cov[f, g] from a single shared density."""
    def fg(w):
        return np.asarray(f(w), dtype=float) * np.asarray(g(w), dtype=float)

    ef, eg, efg = posterior_moments(problem, [f, g, fg], grid, h=h,
                                    probe_loss=probe_loss,
                                    restriction=restriction, **kwargs)
    return efg - ef * eg


def mixture_derivative(problem: GibbsProblem, observable, probe_loss,
                       grid: GridSpec | None = None, *, step: float = 1e-4,
                       restriction: ComponentSpec | None = None, **kwargs) -> float:
    """Central difference (d/dh) <observable>_h at h = 0.

    The same grid is reused at h = +/-step so that truncation errors cancel
    in the difference.
    """
    if grid is None:
        grid = auto_grid(problem, restriction, h=0.0, probe_loss=probe_loss)
    up = quadrature_expectation(problem, observable, grid, h=step,
                                probe_loss=probe_loss, restriction=restriction,
                                **kwargs)
    down = quadrature_expectation(problem, observable, grid, h=-step,
                                  probe_loss=probe_loss, restriction=restriction,
                                  **kwargs)
    return (up - down) / (2.0 * step)


def weight_derivative(problem: GibbsProblem, observable, i: int,
                      grid: GridSpec | None = None, *, step: float = 1e-4,
                      **kwargs) -> float:
    """Central difference (d/d rho_i) E_rho[observable] at the current weights."""
    if not 0 <= i < problem.n:
        raise ValueError(f"data index {i} out of range")
    if grid is None:
        grid = auto_grid(problem)
    results = []
    for delta in (step, -step):
        weights = problem.weights.copy()
        weights[i] += delta
        results.append(quadrature_expectation(problem.with_weights(weights),
                                              observable, grid, **kwargs))
    return (results[0] - results[1]) / (2.0 * step)
