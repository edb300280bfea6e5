"""Toy parametric loss models with analytic gradients, registered by name.

Each model exposes the per-sample loss ``l_z(w)``, its gradient in ``w``, and
a vectorized evaluation over a batch of parameter points (used both for
cached chain losses and for quadrature grids).
"""

from __future__ import annotations

import numpy as np


class GaussianLocationModel:
    """Weighted Gaussian location loss ``l_z(w) = 0.5 * sum_i p_i (w_i - z_i)^2``.

    With a single unit precision this is the 1-D Gaussian location model;
    with several precisions it is a separable quadratic in any dimension.
    """

    name = "gaussian_location"

    def __init__(self, precisions=(1.0,)):
        self.precisions = np.atleast_1d(np.asarray(precisions, dtype=float))
        if self.precisions.ndim != 1 or np.any(self.precisions <= 0):
            raise ValueError("precisions must be a vector of positive reals")
        self.dim = self.precisions.size

    def params(self) -> dict:
        return {"precisions": self.precisions.tolist()}

    def per_sample_loss(self, w, z) -> float:
        d = np.asarray(w, dtype=float) - np.asarray(z, dtype=float)
        return float(0.5 * np.dot(self.precisions, d * d))

    def per_sample_grad(self, w, z) -> np.ndarray:
        return self.precisions * (np.asarray(w, dtype=float) - np.asarray(z, dtype=float))

    def loss_on_grid(self, W, z) -> np.ndarray:
        d = np.asarray(W, dtype=float) - np.asarray(z, dtype=float)
        return 0.5 * (d * d) @ self.precisions


class AnharmonicModel:
    """1-D quartic loss with optional data coupling.

    ``l_z(w) = lam w^2/2 + cubic w^3/6 + quartic w^4/24
               + z (couple_linear w + couple_quadratic w^2/2)``

    With all couplings zero this is the pure anharmonic well; the couplings
    give the per-sample losses a data dependence while leaving the mean loss
    unchanged on a dataset with zero mean.
    """

    name = "anharmonic1d"
    dim = 1

    def __init__(self, lam, cubic=0.0, quartic=0.0,
                 couple_linear=0.0, couple_quadratic=0.0):
        self.lam = float(lam)
        self.cubic = float(cubic)
        self.quartic = float(quartic)
        self.couple_linear = float(couple_linear)
        self.couple_quadratic = float(couple_quadratic)
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.quartic < 0:
            raise ValueError("quartic must be non-negative")
        if self.cubic != 0.0:
            # unique-global-minimum condition for the quartic well
            if not (self.quartic > 0 and self.cubic**2 < 3 * self.lam * self.quartic):
                raise ValueError("need cubic^2 < 3 * lam * quartic for a unique minimum")

    def params(self) -> dict:
        return {
            "lam": self.lam, "cubic": self.cubic, "quartic": self.quartic,
            "couple_linear": self.couple_linear,
            "couple_quadratic": self.couple_quadratic,
        }

    def _poly(self, x):
        return (self.lam * x**2 / 2.0 + self.cubic * x**3 / 6.0
                + self.quartic * x**4 / 24.0)

    def per_sample_loss(self, w, z) -> float:
        x = float(np.asarray(w, dtype=float).reshape(()))
        z = float(np.asarray(z, dtype=float).reshape(()))
        return float(self._poly(x) + z * (self.couple_linear * x
                                          + self.couple_quadratic * x**2 / 2.0))

    def per_sample_grad(self, w, z) -> np.ndarray:
        x = float(np.asarray(w, dtype=float).reshape(()))
        z = float(np.asarray(z, dtype=float).reshape(()))
        g = (self.lam * x + self.cubic * x**2 / 2.0 + self.quartic * x**3 / 6.0
             + z * (self.couple_linear + self.couple_quadratic * x))
        return np.array([g])

    def loss_on_grid(self, W, z) -> np.ndarray:
        x = np.asarray(W, dtype=float)[:, 0]
        z = float(np.asarray(z, dtype=float).reshape(()))
        return (self._poly(x) + z * (self.couple_linear * x
                                     + self.couple_quadratic * x**2 / 2.0))


class PolynomialModel:
    """Data-free polynomial loss ``l(w) = w'Hw/2 + T:w^3/6 + q (w'w)^2``.

    Used as the target of the Laplace-expansion oracle checks in dimension
    d <= 2. The isotropic quartic stabilizer keeps the well integrable; the
    unique-global-minimum condition is checked on construction.
    """

    name = "polynomial"

    def __init__(self, hessian, cubic=None, quartic=0.0):
        self.hessian = np.atleast_2d(np.asarray(hessian, dtype=float))
        d = self.hessian.shape[0]
        if self.hessian.shape != (d, d) or not np.allclose(self.hessian, self.hessian.T):
            raise ValueError("hessian must be symmetric")
        self.dim = d
        if cubic is None:
            cubic = np.zeros((d, d, d))
        self.cubic = np.asarray(cubic, dtype=float)
        if self.cubic.shape != (d, d, d):
            raise ValueError(f"cubic tensor must have shape {(d, d, d)}")
        self.quartic = float(quartic)
        lam_min = float(np.linalg.eigvalsh(self.hessian).min())
        if lam_min <= 0:
            raise ValueError("hessian must be positive-definite")
        # bound |T:w^3|/6 <= t_max |w|^3; a*r^2 - t_max*r^3 + q*r^4 > 0 for r > 0
        # whenever t_max^2 < 4*a*q with a = lam_min/2.
        t_max = float(np.abs(self.cubic).sum()) / 6.0
        if t_max > 0 and not t_max**2 < 2.0 * lam_min * self.quartic:
            raise ValueError("quartic stabilizer too weak for this cubic term")

    def params(self) -> dict:
        return {"hessian": self.hessian.tolist(), "cubic": self.cubic.tolist(),
                "quartic": self.quartic}

    def per_sample_loss(self, w, z) -> float:
        return float(self.loss_on_grid(np.asarray(w, dtype=float)[None, :], z)[0])

    def per_sample_grad(self, w, z) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        g = self.hessian @ w + 0.5 * np.einsum("ijk,j,k->i", self.cubic, w, w)
        return g + 4.0 * self.quartic * float(w @ w) * w

    def loss_on_grid(self, W, z) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        quad = 0.5 * np.einsum("mi,ij,mj->m", W, self.hessian, W)
        cub = np.einsum("ijk,mi,mj,mk->m", self.cubic, W, W, W) / 6.0
        r2 = np.einsum("mi,mi->m", W, W)
        return quad + cub + self.quartic * r2 * r2


class LinearRegressionModel:
    """Small least-squares regression: ``z = (x, y)``, ``l_z(w) = (y - x.w)^2 / 2``."""

    name = "linear_regression"

    def __init__(self, n_features):
        self.dim = int(n_features)
        if self.dim < 1:
            raise ValueError("n_features must be >= 1")

    def params(self) -> dict:
        return {"n_features": self.dim}

    def _split(self, z):
        z = np.asarray(z, dtype=float)
        return z[: self.dim], z[self.dim]

    def per_sample_loss(self, w, z) -> float:
        x, y = self._split(z)
        r = y - float(np.dot(x, np.asarray(w, dtype=float)))
        return 0.5 * r * r

    def per_sample_grad(self, w, z) -> np.ndarray:
        x, y = self._split(z)
        r = y - float(np.dot(x, np.asarray(w, dtype=float)))
        return -r * x

    def loss_on_grid(self, W, z) -> np.ndarray:
        x, y = self._split(z)
        r = y - np.asarray(W, dtype=float) @ x
        return 0.5 * r * r


MODEL_REGISTRY = {
    "gaussian_location": GaussianLocationModel,
    "anharmonic1d": AnharmonicModel,
    "polynomial": PolynomialModel,
    "linear_regression": LinearRegressionModel,
}


def build_model(name: str, params: dict):
    """Instantiate a registered model from its name and parameter block."""
    if name not in MODEL_REGISTRY:
        raise KeyError(f"unknown model {name!r}; registered: {sorted(MODEL_REGISTRY)}")
    return MODEL_REGISTRY[name](**params)
