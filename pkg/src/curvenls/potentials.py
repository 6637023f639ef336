"""Analytic potential presets with gradient and Hessian evaluators."""

import numpy as np


class PotentialField:
    """Positive smooth potential on R^n with analytic derivatives.

    Subclasses implement value/gradient/hessian for points of shape
    (..., n). `check_positive` enforces the uniform lower bound on the
    working region.
    """

    name = "potential"

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def check_positive(self, x: np.ndarray, v_min: float = 0.0) -> None:
        v = self.value(x)
        if np.any(v <= v_min):
            raise ValueError(
                f"potential '{self.name}' not bounded below by {v_min} "
                f"on the working region (min {np.min(v):.4g})")


class ConstantPotential(PotentialField):
    name = "constant"

    def __init__(self, v0: float = 1.0):
        if v0 <= 0:
            raise ValueError("constant potential must be positive")
        self.v0 = float(v0)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.v0)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        return np.zeros(x.shape[:-1] + (n, n))


class RadialCosinePotential(PotentialField):
    """V(x) = a + b cos|x|; positive everywhere when a > |b|."""

    name = "radial-cosine"

    def __init__(self, a: float = 2.0, b: float = 1.0):
        if a <= abs(b):
            raise ValueError("need a > |b| for positivity")
        self.a, self.b = float(a), float(b)

    def value(self, x):
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return self.a + self.b * np.cos(r)

    def radial_value(self, r):
        return self.a + self.b * np.cos(r)

    def radial_derivative(self, r):
        return -self.b * np.sin(r)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        rs = np.where(r > 1e-12, r, 1.0)
        return -self.b * np.sin(rs) * x / rs

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        r = np.linalg.norm(x, axis=-1)
        rs = np.where(r > 1e-12, r, 1.0)
        xhat = x / rs[..., None]
        eye = np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n))
        outer = xhat[..., :, None] * xhat[..., None, :]
        vp = -self.b * np.sin(rs)
        vpp = -self.b * np.cos(rs)
        return (vpp[..., None, None] * outer
                + (vp / rs)[..., None, None] * (eye - outer))


class AnisotropicQuadraticPotential(PotentialField):
    """V(x) = v0 + sum_i a_i (x_i - c_i)^2 with v0 > 0, a_i >= 0."""

    name = "quadratic"

    def __init__(self, v0: float = 1.0, coeffs=(1.0, 1.0), center=None):
        if v0 <= 0:
            raise ValueError("offset v0 must be positive")
        self.v0 = float(v0)
        self.coeffs = np.asarray(coeffs, dtype=float)
        if np.any(self.coeffs < 0):
            raise ValueError("quadratic coefficients must be nonnegative")
        self.center = (np.zeros_like(self.coeffs) if center is None
                       else np.asarray(center, dtype=float))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.v0 + np.sum(self.coeffs * (x - self.center) ** 2, axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * self.coeffs * (x - self.center)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        h = np.diag(2.0 * self.coeffs)
        return np.broadcast_to(h, x.shape[:-1] + h.shape).copy()


def make_potential(name: str, n: int, **params) -> PotentialField:
    presets = {
        "constant": lambda: ConstantPotential(params.get("v0", 1.0)),
        "radial-cosine": lambda: RadialCosinePotential(
            params.get("a", 2.0), params.get("b", 1.0)),
        "quadratic": lambda: AnisotropicQuadraticPotential(
            params.get("v0", 1.0),
            params.get("coeffs", tuple(1.0 for _ in range(n))),
            params.get("center")),
    }
    if name not in presets:
        raise ValueError(
            f"unknown potential preset '{name}'; choose from {sorted(presets)}")
    return presets[name]()
