"""Concrete objectives: robust regression losses, their data-free
simplifications, a 1-d dissipative toy and a quadratic oracle.

All objectives evaluate on batches of shape ``(..., d)``.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Optional

import numpy as np
from scipy import optimize

from .core import LocalGrowthFn, Objective, RegularityConstants, as_point
from .errors import NotFoundError

# grid used when a supremum over the scalar residual is computed numerically
_RESIDUAL_GRID = np.linspace(0.0, 12.0, 240_001)


def _sqnorm(theta):
    return np.einsum("...i,...i->...", theta, theta)


def _check_positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive, got {value}")


class Quadratic(Objective):
    """f(theta) = 0.5 |theta - center|^2."""

    name = "quadratic"

    def __init__(self, dim: int = 1, center=None):
        if int(dim) < 1:
            raise ValueError("dim must be >= 1")
        self.dim = int(dim)
        self.center = np.zeros(self.dim) if center is None else as_point(center, self.dim)
        self.known_min = self.center.copy()
        c = float(np.linalg.norm(self.center))
        # <theta, theta - c> >= |theta|^2/2 - |c|^2/2 (Young); exact alpha=1 when c = 0
        alpha, beta = (1.0, 0.0) if c == 0 else (0.5, 0.5 * c * c)
        self.constants = RegularityConstants(
            L=max(1.0, c),
            alpha=alpha,
            beta=beta,
            L_tilde=1.0,
            gamma=2.0,
            g_spec=LocalGrowthFn.power(1.0, 2.0),
            R_local=1.0,
            delta=alpha * 1.0,
        )

    def value(self, theta):
        diff = np.asarray(theta, dtype=float) - self.center
        return 0.5 * _sqnorm(diff)

    def grad(self, theta):
        return np.asarray(theta, dtype=float) - self.center

    def hessian(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.broadcast_to(np.eye(self.dim), theta.shape[:-1] + (self.dim, self.dim)).copy()

    def params(self):
        return {"center": self.center.tolist()}


class QuadSine(Objective):
    """f(x) = x^2 + 10 sin x on the real line; non-convex and (1, 25)-dissipative."""

    name = "quadsine"

    def __init__(self):
        self.dim = 1
        root = optimize.brentq(lambda x: 2 * x + 10 * math.cos(x), -2.0, -1.0, xtol=1e-15, rtol=1e-15)
        self.known_min = np.array([root])
        # |2x + 10 cos x| / (1 + |x|) peaks at x = 0 with value 10; |f''| <= 12
        self.constants = RegularityConstants(L=10.0, alpha=1.0, beta=25.0, L_tilde=12.0)

    def value(self, theta):
        x = np.asarray(theta, dtype=float)[..., 0]
        return x * x + 10.0 * np.sin(x)

    def grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        return 2.0 * theta + 10.0 * np.cos(theta)

    def hessian(self, theta):
        theta = np.asarray(theta, dtype=float)
        return (2.0 - 10.0 * np.sin(theta))[..., None]


class SimplifiedCauchy(Objective):
    """f(theta) = 0.5 log(1 + |theta|^2) + (lam/2) |theta|^2, minimized at 0."""

    name = "simplified-cauchy"

    def __init__(self, dim: int = 10, lam: float = 0.1, R: float = 1.0):
        _check_positive("lambda", lam)
        _check_positive("R", R)
        self.dim = int(dim)
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        self.lam = float(lam)
        self.known_min = np.zeros(self.dim)
        gamma = 2 * self.lam**2 / (1 + self.lam)
        # |theta|/(1+|theta|^2) <= 1/2, so |grad| <= 1/2 + lam |theta|
        self.constants = RegularityConstants(
            L=max(0.5, self.lam),
            alpha=self.lam,
            beta=0.0,
            L_tilde=1.0 + self.lam,
            gamma=gamma,
            g_spec=LocalGrowthFn.linear(gamma),
            R_local=float(R),
        )

    def value(self, theta):
        s = _sqnorm(np.asarray(theta, dtype=float))
        return 0.5 * np.log1p(s) + 0.5 * self.lam * s

    def grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        s = _sqnorm(theta)[..., None]
        return theta / (1.0 + s) + self.lam * theta

    def hessian(self, theta):
        theta = np.asarray(theta, dtype=float)
        s = _sqnorm(theta)[..., None, None]
        eye = np.eye(self.dim)
        outer = theta[..., :, None] * theta[..., None, :]
        return eye / (1.0 + s) - 2.0 * outer / (1.0 + s) ** 2 + self.lam * eye

    def params(self):
        return {"lambda": self.lam, "R": self.constants.R_local}


class SimplifiedBZ(Objective):
    """f(theta) = -0.5 log(nu + exp(-|theta|^2)) + (lam/2) |theta|^2, minimized at 0."""

    name = "simplified-bz"

    def __init__(self, dim: int = 10, lam: float = 0.1, nu: float = 1.0, R: float = 2.0):
        _check_positive("lambda", lam)
        _check_positive("nu", nu)
        _check_positive("R", R)
        self.dim = int(dim)
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        self.lam = float(lam)
        self.nu = float(nu)
        self.known_min = np.zeros(self.dim)
        R = float(R)
        local = LocalGrowthFn.power(self.lam + 1.0 / (1.0 + self.nu * math.exp(R * R)), 2.0)
        # radial Hessian term 2 nu e^s s/(1 + nu e^s)^2 <= 2/(e nu)
        self.constants = RegularityConstants(
            L=1.0 / (1.0 + self.nu) + self.lam,
            alpha=self.lam,
            beta=0.0,
            L_tilde=1.0 / (1.0 + self.nu) + self.lam + 2.0 / (math.e * self.nu),
            g_spec=local,
            R_local=R,
            delta=self.lam * R,
        )

    def _weight(self, s):
        # 1 / (1 + nu e^s) written without overflow
        e = np.exp(-s)
        return e / (e + self.nu)

    def value(self, theta):
        s = _sqnorm(np.asarray(theta, dtype=float))
        return -0.5 * np.log(self.nu + np.exp(-s)) + 0.5 * self.lam * s

    def grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        s = _sqnorm(theta)[..., None]
        return theta * self._weight(s) + self.lam * theta

    def hessian(self, theta):
        theta = np.asarray(theta, dtype=float)
        s = _sqnorm(theta)[..., None, None]
        e = np.exp(-s)
        eye = np.eye(self.dim)
        outer = theta[..., :, None] * theta[..., None, :]
        return eye * e / (e + self.nu) - 2.0 * self.nu * e / (e + self.nu) ** 2 * outer + self.lam * eye

    def params(self):
        return {"lambda": self.lam, "nu": self.nu, "R": self.constants.R_local}


class _RegressionObjective(Objective):
    """Shared plumbing for finite-sum regression objectives."""

    def __init__(self, X, y, lam: float):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise ValueError("design matrix X must be 2-d")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"dimension mismatch: X has {X.shape[0]} rows, y has {y.shape[0]}")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("empty regression data")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("regression data must be finite")
        _check_positive("lambda", lam)
        self.X = X
        self.y = y
        self.lam = float(lam)
        self.m, self.dim = X.shape
        self.xty = X.T @ y / self.m
        self.lambda_max = float(np.linalg.eigvalsh(X.T @ X / self.m)[-1])
        self.max_row_norm = float(np.sqrt(_sqnorm(X).max()))

    def residuals(self, theta):
        """y_i - <x_i, theta> for every sample, shape (..., m)."""
        return self.y - np.asarray(theta, dtype=float) @ self.X.T

    def _data_weight(self, r):
        raise NotImplementedError

    def grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        w = self._data_weight(self.residuals(theta))
        return -(w @ self.X) / self.m + self.lam * theta

    def minibatch_grad(self, theta, idx):
        """Average per-sample gradient over index sets ``idx`` of shape (N, b)."""
        theta = np.asarray(theta, dtype=float)
        idx = np.asarray(idx)
        Xb = self.X[idx]
        r = self.y[idx] - np.einsum("nbd,nd->nb", Xb, theta)
        w = self._data_weight(r)
        return -np.einsum("nb,nbd->nd", w, Xb) / idx.shape[-1] + self.lam * theta

    def sample_grad_bound(self) -> float:
        """Upper bound on |grad F(theta, Z_i) - grad f(theta)| over theta and i."""
        return 2.0 * self.max_row_norm * self._weight_sup()

    def _weight_sup(self) -> float:
        raise NotImplementedError

    def params(self):
        return {"lambda": self.lam, "m": self.m}


class CauchyRegMLE(_RegressionObjective):
    """f(theta) = (1/2m) sum log(1 + (y_i - <x_i,theta>)^2) + (lam/2)|theta|^2."""

    name = "cauchy-reg-mle"

    def __init__(self, X, y, lam: float = 0.1):
        super().__init__(X, y, lam)
        beta = float(_sqnorm(self.xty)) / self.lam
        # |r/(1+r^2)| <= 1/2 so |grad| <= max|x_i|/2 + lam |theta|
        self.constants = RegularityConstants(
            L=max(0.5 * self.max_row_norm, self.lam),
            alpha=self.lam / 4.0,
            beta=beta,
            L_tilde=self.lambda_max + self.lam,
        )

    def _data_weight(self, r):
        return r / (1.0 + r * r)

    def _weight_sup(self):
        return 0.5

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.residuals(theta)
        return 0.5 * np.mean(np.log1p(r * r), axis=-1) + 0.5 * self.lam * _sqnorm(theta)

    def hessian(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.residuals(theta)
        c = (1.0 - r * r) / (1.0 + r * r) ** 2
        H = np.einsum("...i,ij,ik->...jk", c, self.X, self.X) / self.m
        return H + self.lam * np.eye(self.dim)


class BlakeZissermanMLE(_RegressionObjective):
    """f(theta) = -(1/2m) sum log(nu + exp(-(y_i - <x_i,theta>)^2)) + (lam/2)|theta|^2."""

    name = "bz-mle"

    def __init__(self, X, y, lam: float = 0.1, nu: float = 1.0):
        _check_positive("nu", nu)
        self.nu = float(nu)
        super().__init__(X, y, lam)
        r = _RESIDUAL_GRID
        e = np.exp(-r * r)
        s = r * e / (self.nu + e)
        ds = e / (self.nu + e) - 2.0 * r * r * self.nu * e / (self.nu + e) ** 2
        self._s_sup = float(s.max()) * (1 + 1e-6)
        ds_sup = float(np.abs(ds).max()) * (1 + 1e-6)
        beta = float(_sqnorm(self.xty)) / (2.0 * self.lam * (1.0 + self.nu) ** 2)
        self.constants = RegularityConstants(
            L=max(self.max_row_norm * self._s_sup, self.lam),
            alpha=self.lam / 2.0,
            beta=beta,
            L_tilde=self.lambda_max * ds_sup + self.lam,
        )

    def _data_weight(self, r):
        e = np.exp(-r * r)
        return r * e / (self.nu + e)

    def _weight_sup(self):
        return self._s_sup

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.residuals(theta)
        return -0.5 * np.mean(np.log(self.nu + np.exp(-r * r)), axis=-1) + 0.5 * self.lam * _sqnorm(theta)

    def hessian(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.residuals(theta)
        e = np.exp(-r * r)
        c = e / (self.nu + e) - 2.0 * r * r * self.nu * e / (self.nu + e) ** 2
        H = np.einsum("...i,ij,ik->...jk", c, self.X, self.X) / self.m
        return H + self.lam * np.eye(self.dim)

    def params(self):
        return {"lambda": self.lam, "nu": self.nu, "m": self.m}


_ALIASES = {
    "quadratic": "quadratic",
    "quadsine": "quadsine",
    "quad-sine": "quadsine",
    "simplified-cauchy": "simplified-cauchy",
    "simplified_cauchy": "simplified-cauchy",
    "simplified-bz": "simplified-bz",
    "simplified_bz": "simplified-bz",
    "cauchy": "cauchy-reg-mle",
    "cauchy-reg-mle": "cauchy-reg-mle",
    "cauchy_reg_mle": "cauchy-reg-mle",
    "bz": "bz-mle",
    "bz-mle": "bz-mle",
    "blake-zisserman": "bz-mle",
}

OBJECTIVE_NAMES = tuple(sorted(set(_ALIASES.values())))
DATA_OBJECTIVES = ("cauchy-reg-mle", "bz-mle")


def canonical_name(name: str) -> str:
    try:
        return _ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(
            f"unknown objective {name!r}; choose one of {', '.join(OBJECTIVE_NAMES)}"
        ) from None


def make_objective(name: str, *, dim: int = 1, lam: float = 0.1, nu: float = 1.0,
                   R: Optional[float] = None, center=None, X=None, y=None, dataset=None) -> Objective:
    """Build a named objective.

    Data objectives take ``X``/``y`` or a ``dataset`` with those attributes.
    """
    key = canonical_name(name)
    if key == "quadratic":
        return Quadratic(dim, center)
    if key == "quadsine":
        if dim not in (1, None):
            raise ValueError("quadsine is one-dimensional")
        return QuadSine()
    if key == "simplified-cauchy":
        return SimplifiedCauchy(dim, lam, R=1.0 if R is None else R)
    if key == "simplified-bz":
        return SimplifiedBZ(dim, lam, nu, R=2.0 if R is None else R)
    if dataset is not None:
        X, y = dataset.X, dataset.y
    if X is None or y is None:
        raise ValueError(f"{key} needs regression data (X, y)")
    if key == "cauchy-reg-mle":
        return CauchyRegMLE(X, y, lam)
    return BlakeZissermanMLE(X, y, lam, nu)


class Witness(NamedTuple):
    theta: np.ndarray
    u: np.ndarray
    value: float


def radial_curvature(objective: Objective, radii, direction=None) -> np.ndarray:
    """<u, hess f(r u) u> along a ray for each radius r (u defaults to e_1)."""
    if not objective.has_hessian:
        raise NotImplementedError(f"{objective.name} has no Hessian oracle")
    u = np.zeros(objective.dim)
    u[0] = 1.0
    if direction is not None:
        u = as_point(direction, objective.dim)
        u = u / np.linalg.norm(u)
    radii = np.asarray(radii, dtype=float)
    H = objective.hessian(radii[:, None] * u)
    return np.einsum("i,nij,j->n", u, H, u)


def hessian_negativity_witness(objective: Objective, radii=None, direction=None) -> Witness:
    """Search a ray for negative curvature along u = theta/|theta|.

    Scans |theta| in [0.5, 3] with step 0.01 by default and returns the most
    negative point. Raises :class:`NotFoundError` when the form is
    non-negative on the whole grid.
    """
    if radii is None:
        radii = np.round(np.arange(50, 301) * 0.01, 10)
    radii = np.asarray(radii, dtype=float)
    curv = radial_curvature(objective, radii, direction)
    if not np.any(curv < 0):
        raise NotFoundError(
            f"no negative curvature found for {objective.name} on |theta| in "
            f"[{radii.min():g}, {radii.max():g}]"
        )
    i = int(np.argmin(curv))
    u = np.zeros(objective.dim)
    u[0] = 1.0
    if direction is not None:
        u = as_point(direction, objective.dim)
        u = u / np.linalg.norm(u)
    return Witness(radii[i] * u, u, float(curv[i]))
