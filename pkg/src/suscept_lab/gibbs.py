"""Tempered Gibbs posteriors over parametric losses, sampled by SGLD.

The target density is proportional to ``exp(-n beta L_n(w)) pi(w)`` where
``L_n`` is the (optionally reweighted) empirical loss and the prior ``pi``
is the Gaussian localizer implied by the sampler's ``gamma (w - w*)`` drift.
Chains may be restricted to a component: the complementary coordinates stay
clamped at ``w*`` bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .mcstats import batch_means_se
from .streams import substream


class NonFiniteLossError(RuntimeError):
    """A loss evaluation produced inf or nan."""


class SgldDivergenceError(RuntimeError):
    """An SGLD chain left its divergence radius; try a smaller step size."""

    def __init__(self, step, distance, radius, step_size):
        self.step = step
        self.distance = distance
        self.radius = radius
        self.step_size = step_size
        super().__init__(
            f"chain diverged at step {step}: |w - w*| = {distance:.3g} "
            f"exceeds radius {radius:.3g}; reduce step_size (currently "
            f"{step_size:.3g}), e.g. via suggest_step_size()"
        )


class FingerprintMismatchError(RuntimeError):
    """Chains produced by different problems were combined."""


@dataclass(frozen=True)
class ComponentSpec:
    """A factor of parameter space: the indices of the probed component."""

    name: str
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if not idx:
            raise ValueError("a component needs at least one index")
        if len(set(idx)) != len(idx):
            raise ValueError("component indices must be distinct")
        if idx[0] < 0:
            raise ValueError("component indices must be non-negative")
        object.__setattr__(self, "indices", idx)

    def complement(self, dim: int) -> tuple[int, ...]:
        return tuple(i for i in range(dim) if i not in set(self.indices))


class GibbsProblem:
    """Model-truth-prior triplet at temperature: the object all estimators share.

    Parameters
    ----------
    model : a registered loss model (see ``models``).
    dataset : sequence of data points, one row per sample.
    beta : inverse temperature > 0.
    gamma : localization strength >= 0 (0 means a flat prior).
    w_star : reference parameter, the localization center.
    weights : optional per-sample weights rho (default all ones).
    """

    def __init__(self, model, dataset, beta, gamma=0.0, w_star=None, weights=None):
        self.model = model
        self.dataset = np.atleast_1d(np.asarray(dataset, dtype=float))
        self.n = int(self.dataset.shape[0])
        if self.n < 1:
            raise ValueError("dataset must contain at least one point")
        self.beta = float(beta)
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        self.gamma = float(gamma)
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        self.dim = int(model.dim)
        if w_star is None:
            w_star = np.zeros(self.dim)
        self.w_star = np.asarray(w_star, dtype=float).copy()
        if self.w_star.shape != (self.dim,):
            raise ValueError(f"w_star must have shape ({self.dim},)")
        if weights is None:
            weights = np.ones(self.n)
        self.weights = np.asarray(weights, dtype=float).copy()
        if self.weights.shape != (self.n,):
            raise ValueError(f"weights must have shape ({self.n},)")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")

    @property
    def n_beta(self) -> float:
        return self.n * self.beta

    def data_point(self, i: int):
        return self.dataset[i]

    def per_sample_losses(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return np.array([self.model.per_sample_loss(w, z) for z in self.dataset])

    def empirical_loss(self, w) -> float:
        """Weighted empirical loss ``(1/n) sum_i rho_i l_{z_i}(w)``."""
        value = float(np.dot(self.weights, self.per_sample_losses(w)) / self.n)
        if not np.isfinite(value):
            raise NonFiniteLossError(f"empirical loss is {value} at w = {w}")
        return value

    def minibatch_grad(self, w, indices) -> np.ndarray:
        """Unbiased estimate of grad L_n from a uniformly drawn index batch."""
        g = np.zeros(self.dim)
        for i in indices:
            g += self.weights[i] * self.model.per_sample_grad(w, self.dataset[i])
        return g / len(indices)

    def empirical_loss_grad(self, w) -> np.ndarray:
        return self.minibatch_grad(w, range(self.n))

    def per_sample_loss_on_grid(self, W, i: int) -> np.ndarray:
        return self.model.loss_on_grid(W, self.dataset[i])

    def empirical_loss_on_grid(self, W) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        total = np.zeros(W.shape[0])
        for i in range(self.n):
            total += self.weights[i] * self.model.loss_on_grid(W, self.dataset[i])
        return total / self.n

    def with_weights(self, weights) -> "GibbsProblem":
        return GibbsProblem(self.model, self.dataset, self.beta, self.gamma,
                            self.w_star, weights)

    @property
    def fingerprint(self) -> str:
        """Stable hash of everything the posterior depends on."""
        if not hasattr(self, "_fingerprint"):
            h = hashlib.sha256()
            h.update(self.model.name.encode())
            h.update(json.dumps(self.model.params(), sort_keys=True).encode())
            for arr in (self.dataset, self.w_star, self.weights,
                        np.array([self.beta, self.gamma])):
                h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
            self._fingerprint = h.hexdigest()[:16]
        return self._fingerprint


@dataclass(frozen=True)
class SGLDConfig:
    """Step-size and chain-length parameters for SGLD runs.

    ``steps`` counts post-burn-in steps; every ``thinning``-th is retained.
    """

    step_size: float
    minibatch_size: int
    steps: int
    burn_in: int = 0
    thinning: int = 1
    chains: int = 1
    seed: int = 0
    divergence_radius: float | None = None

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")
        if self.steps <= 0:
            raise ValueError("steps must be > 0")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")


class ChainSamples:
    """Posterior draws with cached per-sample losses on the full dataset."""

    def __init__(self, draws, per_sample_losses, problem: GibbsProblem,
                 restriction: ComponentSpec | None = None, meta: dict | None = None):
        self.draws = np.asarray(draws, dtype=float)
        self.per_sample_losses = np.asarray(per_sample_losses, dtype=float)
        if self.draws.ndim != 2 or self.per_sample_losses.shape != (
                self.draws.shape[0], problem.n):
            raise ValueError("draws and per_sample_losses shapes are inconsistent")
        self.problem = problem
        self.restriction = restriction
        self.fingerprint = problem.fingerprint
        self.meta = dict(meta or {})
        self._emp = None

    @property
    def n_draws(self) -> int:
        return int(self.draws.shape[0])

    def empirical_losses(self) -> np.ndarray:
        """Per-draw weighted empirical loss L_n(w_t), from the cache."""
        if self._emp is None:
            p = self.problem
            self._emp = self.per_sample_losses @ (p.weights / p.n)
        return self._emp

    def query_losses(self, z) -> np.ndarray:
        """Per-draw loss at an arbitrary query point (not necessarily in data)."""
        return self.problem.model.loss_on_grid(self.draws, z)

    def save(self, directory) -> None:
        """Persist draws and cached losses as .npy plus a JSON meta file."""
        import os
        os.makedirs(directory, exist_ok=True)
        np.save(os.path.join(directory, "draws.npy"), self.draws)
        np.save(os.path.join(directory, "per_sample_losses.npy"),
                self.per_sample_losses)
        meta = {
            "fingerprint": self.fingerprint,
            "restriction": None if self.restriction is None else {
                "name": self.restriction.name,
                "indices": list(self.restriction.indices),
            },
            "meta": self.meta,
        }
        with open(os.path.join(directory, "chain.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, directory, problem: GibbsProblem) -> "ChainSamples":
        import os
        with open(os.path.join(directory, "chain.json")) as fh:
            meta = json.load(fh)
        if meta["fingerprint"] != problem.fingerprint:
            raise FingerprintMismatchError(
                f"stored chain fingerprint {meta['fingerprint']} does not match "
                f"problem fingerprint {problem.fingerprint}")
        restriction = None
        if meta["restriction"] is not None:
            restriction = ComponentSpec(meta["restriction"]["name"],
                                        tuple(meta["restriction"]["indices"]))
        return cls(np.load(os.path.join(directory, "draws.npy")),
                   np.load(os.path.join(directory, "per_sample_losses.npy")),
                   problem, restriction, meta["meta"])


def _run_single_chain(problem, config, restriction, rng, noise_scale, init):
    d = problem.dim
    if restriction is None:
        free = np.arange(d)
    else:
        if restriction.indices[-1] >= d:
            raise ValueError(f"component index {restriction.indices[-1]} out of "
                             f"range for dimension {d}")
        free = np.array(restriction.indices)
    w = problem.w_star.copy() if init is None else np.asarray(init, dtype=float).copy()
    if restriction is not None:
        w[restriction.complement(d)] = problem.w_star[restriction.complement(d)]
    radius = config.divergence_radius
    if radius is None:
        radius = 1e3 * float(np.linalg.norm(problem.w_star)) + 1e3
    n_beta = problem.n_beta
    gamma = problem.gamma
    half_eps = 0.5 * config.step_size
    noise_sd = noise_scale * np.sqrt(config.step_size)
    kept = []
    total = config.burn_in + config.steps
    for t in range(total):
        idx = rng.integers(0, problem.n, size=config.minibatch_size)
        grad = problem.minibatch_grad(w, idx)
        drift = n_beta * grad[free] + gamma * (w[free] - problem.w_star[free])
        w[free] = w[free] - half_eps * drift
        if noise_sd > 0.0:
            w[free] = w[free] + noise_sd * rng.standard_normal(free.size)
        dist = float(np.linalg.norm(w - problem.w_star))
        if not np.isfinite(dist) or dist > radius:
            raise SgldDivergenceError(t, dist, radius, config.step_size)
        k = t - config.burn_in
        if k >= 0 and (k + 1) % config.thinning == 0:
            kept.append(w.copy())
    return np.array(kept)


def sgld_run(problem: GibbsProblem, config: SGLDConfig,
             restriction: ComponentSpec | None = None, *,
             noise_scale: float = 1.0, init=None) -> ChainSamples:
    """Run SGLD chains targeting the localized tempered posterior.

    Update rule (on the free coordinates only):
    ``w <- w - (eps/2) [n beta grad L_m(w) + gamma (w - w*)] + N(0, eps I)``
    with the minibatch redrawn uniformly with replacement at every step.
    ``noise_scale = 0`` turns the sampler into plain gradient descent.
    """
    blocks = []
    for c in range(config.chains):
        rng = substream(config.seed, "sgld", f"chain{c}")
        blocks.append(_run_single_chain(problem, config, restriction, rng,
                                        noise_scale, init))
    draws = np.concatenate(blocks, axis=0)
    losses = np.empty((draws.shape[0], problem.n))
    for i in range(problem.n):
        losses[:, i] = problem.per_sample_loss_on_grid(draws, i)
    meta = {"step_size": config.step_size, "steps": config.steps,
            "burn_in": config.burn_in, "thinning": config.thinning,
            "chains": config.chains, "seed": config.seed,
            "noise_scale": noise_scale}
    return ChainSamples(draws, losses, problem, restriction, meta)


def posterior_expectation(samples: ChainSamples, values) -> tuple[float, float]:
    """Mean of a per-draw observable with a batch-means standard error."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size != samples.n_draws:
        raise ValueError("one observable value per draw is required")
    if values.size < 2:
        raise ValueError("need at least 2 draws")
    return float(values.mean()), batch_means_se(values)


def numeric_hessian(fn, w, eps: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar function; d is small here."""
    w = np.asarray(w, dtype=float)
    d = w.size
    h = np.empty((d, d))
    steps = eps * (1.0 + np.abs(w))
    for i in range(d):
        for j in range(i, d):
            ei = np.zeros(d); ei[i] = steps[i]
            ej = np.zeros(d); ej[j] = steps[j]
            if i == j:
                val = (fn(w + ei) - 2.0 * fn(w) + fn(w - ei)) / steps[i] ** 2
            else:
                val = (fn(w + ei + ej) - fn(w + ei - ej)
                       - fn(w - ei + ej) + fn(w - ei - ej)) / (4 * steps[i] * steps[j])
            h[i, j] = h[j, i] = val
    return h


def suggest_step_size(problem: GibbsProblem,
                      restriction: ComponentSpec | None = None,
                      safety: float = 0.05) -> float:
    """Step size from the local stiffness at w*.

    ``safety = 1`` gives the linear-stability bound 2/(n beta lam_max + gamma);
    the default keeps the discretization bias of the stationary variance
    around the percent level.
    """
    hess = numeric_hessian(problem.empirical_loss, problem.w_star)
    if restriction is not None:
        idx = np.array(restriction.indices)
        hess = hess[np.ix_(idx, idx)]
    lam_max = float(np.linalg.eigvalsh(hess).max())
    stiffness = problem.n_beta * max(lam_max, 0.0) + problem.gamma
    if stiffness <= 0:
        raise ValueError("cannot suggest a step size for a flat target")
    return safety * 2.0 / stiffness
