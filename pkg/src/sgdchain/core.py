"""Domain types shared across the package.

Points are plain ``numpy`` float arrays of shape ``(d,)``.  Everything that
evaluates an objective or a test function accepts a batch of points with
shape ``(..., d)`` so that many SGD replications can advance in lock-step.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .errors import EmptyWindowError, EvaluationError

MAX_SEED = 2**64


def as_point(theta, dim: Optional[int] = None) -> np.ndarray:
    """Validate and copy ``theta`` into a finite 1-d float array."""
    arr = np.array(theta, dtype=float, ndmin=1)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"a point must be a non-empty vector, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise ValueError(f"expected a point of dimension {dim}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"point has non-finite coordinates: {arr}")
    return arr


def broadcast_point(value, dim: int) -> np.ndarray:
    """Build a point from a scalar (filled) or a length-``dim`` sequence."""
    arr = np.array(value, dtype=float, ndmin=1)
    if arr.size == 1 and dim > 1:
        arr = np.full(dim, float(arr[0]))
    return as_point(arr, dim)


# --------------------------------------------------------------------------
# Local growth functions g with g(0) = 0, convex, invertible
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalGrowthFn:
    """Local growth function ``g`` used by the localized conditions.

    ``linear`` is ``c*x``, ``power`` is ``c*x**p`` (p >= 1). ``custom`` takes
    user callables for ``g`` and its inverse.
    """

    kind: str = "power"
    coefficient: float = 1.0
    exponent: float = 1.0
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inverse_func: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in ("linear", "power", "custom"):
            raise ValueError(f"unknown local growth kind {self.kind!r}")
        if self.kind == "custom":
            if self.func is None or self.inverse_func is None:
                raise ValueError("custom growth functions need func and inverse_func")
            return
        if not self.coefficient > 0:
            raise ValueError("growth coefficient must be positive")
        if self.kind == "linear" and self.exponent != 1.0:
            object.__setattr__(self, "exponent", 1.0)
        if not self.exponent >= 1:
            raise ValueError("growth exponent must be >= 1 for convexity")

    @classmethod
    def linear(cls, c: float) -> "LocalGrowthFn":
        return cls("linear", float(c), 1.0)

    @classmethod
    def power(cls, c: float, p: float) -> "LocalGrowthFn":
        return cls("power", float(c), float(p))

    def __call__(self, x):
        if self.kind == "custom":
            return self.func(x)
        return self.coefficient * np.power(np.asarray(x, dtype=float), self.exponent)

    def inverse(self, y):
        if self.kind == "custom":
            return self.inverse_func(y)
        return np.power(np.asarray(y, dtype=float) / self.coefficient, 1.0 / self.exponent)

    def describe(self) -> dict:
        if self.kind == "custom":
            return {"kind": "custom"}
        return {"kind": self.kind, "coefficient": self.coefficient, "exponent": self.exponent}


# --------------------------------------------------------------------------
# Regularity constants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RegularityConstants:
    """Declared constants of an objective (and, once attached, of its noise).

    L        linear growth: |grad f(theta)| <= L (1 + |theta|)
    alpha    dissipativity: <theta, grad f> >= alpha |theta|^2 - beta
    beta     (may be 0 for objectives that are dissipative with no offset)
    L_xi     gradient-noise moment constant, filled in from a noise model
    L_tilde  Hessian growth: |hess f(theta)| <= L_tilde (1 + |theta|)
    gamma    tail constant of the gradient-domination condition
    g_spec   local growth function (localized dissipativity or Lojasiewicz)
    R_local  radius separating local and tail regimes
    delta    localized dissipativity margin, R = delta/alpha + sqrt(beta/alpha)
    """

    L: float
    alpha: float
    beta: float
    L_xi: Optional[float] = None
    L_tilde: Optional[float] = None
    gamma: Optional[float] = None
    g_spec: Optional[LocalGrowthFn] = None
    R_local: Optional[float] = None
    delta: Optional[float] = None

    def __post_init__(self):
        for name in ("L", "alpha"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be non-negative and finite, got {self.beta}")
        for name in ("L_xi", "L_tilde", "gamma", "R_local", "delta"):
            value = getattr(self, name)
            if value is not None and not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite when set, got {value}")
        if self.alpha > self.L * (1 + 1e-12):
            raise ValueError(
                f"inconsistent constants: alpha={self.alpha} exceeds L={self.L}"
            )

    def replace(self, **changes) -> "RegularityConstants":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, LocalGrowthFn):
                value = value.describe()
            out[f.name] = value
        return out


# --------------------------------------------------------------------------
# Objectives
# --------------------------------------------------------------------------


class Objective:
    """Base class for objectives with an analytic gradient.

    Subclasses set ``dim``, ``constants`` and optionally ``known_min`` and
    implement ``value`` and ``grad`` for inputs of shape ``(..., d)``.
    """

    name = "objective"
    dim: int
    constants: RegularityConstants
    known_min: Optional[np.ndarray] = None

    def value(self, theta) -> np.ndarray:
        raise NotImplementedError

    def grad(self, theta) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, theta) -> np.ndarray:
        raise NotImplementedError(f"{self.name} has no Hessian oracle")

    @property
    def has_hessian(self) -> bool:
        return type(self).hessian is not Objective.hessian

    @property
    def f_star(self) -> Optional[float]:
        if self.known_min is None:
            return None
        return float(self.value(self.known_min))

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim, **self.params()}


def finite_diff_grad(objective, theta, h: Optional[float] = None) -> np.ndarray:
    """Central-difference gradient of ``objective`` at ``theta``.

    ``objective`` is an :class:`Objective` or a plain callable. The default
    step is ``1e-5 * (1 + |theta|)``.
    """
    f = objective.value if isinstance(objective, Objective) else objective
    theta = as_point(theta)
    if h is None:
        h = 1e-5 * (1.0 + float(np.linalg.norm(theta)))
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    d = theta.size
    shifts = np.eye(d) * h
    plus = np.asarray(f(theta[None, :] + shifts), dtype=float).reshape(d)
    minus = np.asarray(f(theta[None, :] - shifts), dtype=float).reshape(d)
    if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
        raise EvaluationError(f"objective is not finite near theta={theta}")
    return (plus - minus) / (2.0 * h)


def gradient_check(objective: Objective, points) -> np.ndarray:
    """Relative error between the analytic and finite-difference gradients.

    Error at each point is ``|fd - grad| / max(|grad|, 1)``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    errors = np.empty(len(points))
    for i, p in enumerate(points):
        g = np.asarray(objective.grad(p), dtype=float)
        fd = finite_diff_grad(objective, p)
        errors[i] = np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1.0)
    return errors


# --------------------------------------------------------------------------
# Test functions
# --------------------------------------------------------------------------


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


@dataclass
class TestFunction:
    """A test function phi evaluated along the chain.

    ``lipschitz`` is L_phi with |phi(a) - phi(b)| <= L_phi |a - b| when known
    (for ``sigmoid_of_f`` it is the constant of the outer sigmoid, 1/4).
    ``growth`` is L_phi in |phi(theta)| <= L_phi (1 + |theta|), the weaker
    condition sufficient for ergodic averages and the CLT.
    """

    __test__ = False  # keep pytest from collecting this class

    kind: str
    index: Optional[int] = None
    objective: Optional[Objective] = None
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""
    lipschitz: Optional[float] = None
    growth: Optional[float] = None

    def __post_init__(self):
        if self.kind == "norm":
            self.name = self.name or "norm"
            self.lipschitz = 1.0 if self.lipschitz is None else self.lipschitz
            self.growth = 1.0 if self.growth is None else self.growth
        elif self.kind == "coordinate":
            if self.index is None or self.index < 0:
                raise ValueError("coordinate test function needs a non-negative index")
            self.name = self.name or f"coord{self.index}"
            self.lipschitz = 1.0 if self.lipschitz is None else self.lipschitz
            self.growth = 1.0 if self.growth is None else self.growth
        elif self.kind == "sigmoid_of_f":
            if self.objective is None:
                raise ValueError("sigmoid_of_f needs an objective")
            self.name = self.name or "sigmoid_f"
            self.lipschitz = 0.25 if self.lipschitz is None else self.lipschitz
            self.growth = 1.0 if self.growth is None else self.growth
        elif self.kind == "custom":
            if self.func is None:
                raise ValueError("custom test function needs func")
            self.name = self.name or "custom"
        else:
            raise ValueError(f"unknown test function kind {self.kind!r}")

    @classmethod
    def norm(cls) -> "TestFunction":
        return cls("norm")

    @classmethod
    def coordinate(cls, i: int) -> "TestFunction":
        return cls("coordinate", index=int(i))

    @classmethod
    def sigmoid_of(cls, objective: Objective) -> "TestFunction":
        return cls("sigmoid_of_f", objective=objective)

    @classmethod
    def custom(cls, func, name: str = "custom", lipschitz=None, growth=None) -> "TestFunction":
        return cls("custom", func=func, name=name, lipschitz=lipschitz, growth=growth)

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.kind == "norm":
            return np.sqrt(np.einsum("...i,...i->...", theta, theta))
        if self.kind == "coordinate":
            return theta[..., self.index]
        if self.kind == "sigmoid_of_f":
            return sigmoid(self.objective.value(theta))
        return np.asarray(self.func(theta), dtype=float)


def parse_test_function(text: str, objective: Optional[Objective] = None) -> TestFunction:
    """Parse ``norm``, ``coord:<i>``/``coordinate:<i>`` or ``sigmoid_f``."""
    text = text.strip()
    if text == "norm":
        return TestFunction.norm()
    if text in ("sigmoid_f", "sigmoid_of_f", "sigmoid"):
        return TestFunction.sigmoid_of(objective)
    for prefix in ("coord:", "coordinate:", "coord"):
        if text.startswith(prefix) and text[len(prefix):].isdigit():
            return TestFunction.coordinate(int(text[len(prefix):]))
    raise ValueError(f"unknown test function {text!r}")


# --------------------------------------------------------------------------
# Run configuration and trajectories
# --------------------------------------------------------------------------


@dataclass
class SgdConfig:
    eta: float
    n_iters: int
    theta0: np.ndarray
    burn_in: int = 0
    seed: int = 0
    batch_size: Optional[int] = None

    def __post_init__(self):
        self.theta0 = as_point(self.theta0)
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"step size must be positive, got {self.eta}")
        if int(self.n_iters) != self.n_iters or self.n_iters < 1:
            raise ValueError(f"n_iters must be a positive integer, got {self.n_iters}")
        if int(self.burn_in) != self.burn_in or self.burn_in < 0:
            raise ValueError(f"burn_in must be a non-negative integer, got {self.burn_in}")
        self.n_iters = int(self.n_iters)
        self.burn_in = int(self.burn_in)
        if self.burn_in >= self.n_iters:
            raise EmptyWindowError(
                f"empty recording window: burn_in={self.burn_in} >= n_iters={self.n_iters}"
            )
        if not (0 <= int(self.seed) < MAX_SEED):
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(self.seed)
        if self.batch_size is not None and int(self.batch_size) < 1:
            raise ValueError("batch_size must be a positive integer")

    @property
    def dim(self) -> int:
        return self.theta0.size

    @property
    def n_recorded(self) -> int:
        return self.n_iters - self.burn_in

    def replace(self, **changes) -> "SgdConfig":
        return dataclasses.replace(self, **changes)

    def describe(self) -> dict:
        return {
            "eta": self.eta,
            "n_iters": self.n_iters,
            "burn_in": self.burn_in,
            "theta0": self.theta0.tolist(),
            "seed": self.seed,
            "batch_size": self.batch_size,
        }


@dataclass
class Trajectory:
    """Running accumulators of one SGD chain over its recording window.

    ``sums``/``sumsq`` hold sum phi and sum phi^2 per test function name.
    ``sum_sq_norm`` and ``sum_quartic_norm`` are sum |theta|^2 and sum |theta|^4,
    ``sum_theta`` the vector sum used for Polyak-Ruppert averaging. ``iterates``,
    ``series`` (phi values per step) and ``batch_sums`` are only filled on request.
    """

    n_recorded: int
    seed: int
    stream_id: int
    sums: Dict[str, float]
    sumsq: Dict[str, float]
    sum_sq_norm: float
    sum_quartic_norm: float
    sum_theta: np.ndarray
    final_theta: np.ndarray
    burn_in: int = 0
    iterates: Optional[np.ndarray] = None
    series: Dict[str, np.ndarray] = field(default_factory=dict)
    batch_len: Optional[int] = None
    batch_sums: Dict[str, np.ndarray] = field(default_factory=dict)

    def mean(self, name: str) -> float:
        self._require_window()
        return self.sums[name] / self.n_recorded

    def second_moment(self) -> float:
        self._require_window()
        return self.sum_sq_norm / self.n_recorded

    def fourth_moment(self) -> float:
        self._require_window()
        return self.sum_quartic_norm / self.n_recorded

    def _require_window(self):
        if self.n_recorded < 1:
            raise EmptyWindowError("trajectory has an empty recording window")
