"""Random streams, gradient-noise models and synthetic regression data.

Every replication owns an :class:`RngStream` derived from ``(seed, stream_id)``
through :class:`numpy.random.SeedSequence`.  A stream exposes independent
*lanes* (normals, chi-squares, indices, ...) so that the values a stream
produces do not depend on how draws are chunked into blocks: drawing 1000
normals at once or in pieces of 37, 400 and 563 gives the same numbers.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import MAX_SEED, as_point
from .errors import EvaluationError

LANE_NORMAL = 0
LANE_CHISQ = 1
LANE_INDEX = 2
LANE_UNIFORM = 3


class RngStream:
    """Reproducible random stream for one replication."""

    def __init__(self, seed: int, stream_id: int = 0):
        seed, stream_id = int(seed), int(stream_id)
        if not (0 <= seed < MAX_SEED and 0 <= stream_id < MAX_SEED):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")
        self.seed = seed
        self.stream_id = stream_id
        self._lanes = {}

    def lane(self, k: int) -> np.random.Generator:
        gen = self._lanes.get(k)
        if gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, k))
            gen = self._lanes[k] = np.random.Generator(np.random.PCG64(ss))
        return gen

    def normal(self, size=None):
        return self.lane(LANE_NORMAL).standard_normal(size)

    def chisquare(self, df: float, size=None):
        return self.lane(LANE_CHISQ).chisquare(df, size)

    def integers(self, high: int, size=None):
        return self.lane(LANE_INDEX).integers(0, high, size)

    def uniform(self, size=None):
        return self.lane(LANE_UNIFORM).random(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def sample_student_t(stream: RngStream, df: float, scale: float = 1.0, size=None):
    """scale * t(df), drawn as N(0,1) / sqrt(chi2(df)/df)."""
    if not (df > 0 and scale > 0):
        raise ValueError("df and scale must be positive")
    z = stream.normal(size)
    v = stream.chisquare(df, size)
    return scale * z / np.sqrt(v / df)


# --------------------------------------------------------------------------
# Regression data
# --------------------------------------------------------------------------


@dataclass
class RegressionDataset:
    X: np.ndarray
    y: np.ndarray
    theta_true: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def gen_regression_data(m: int, d: int, noise_df: float, stream: RngStream) -> RegressionDataset:
    """Design with +-1/sqrt(d) entries, theta_true ~ Unif(0,1)^d, y = X theta_true + t(noise_df)."""
    m, d = int(m), int(d)
    if m < 1 or d < 1:
        raise ValueError("m and d must be >= 1")
    signs = 2 * stream.integers(2, size=(m, d)) - 1
    X = signs / math.sqrt(d)
    theta_true = stream.uniform(d)
    eps = sample_student_t(stream, noise_df, 1.0, m)
    y = X @ theta_true + eps
    meta = {"m": m, "d": d, "noise_df": float(noise_df), "seed": stream.seed}
    return RegressionDataset(X, y, theta_true, meta)


def _fmt(x: float) -> str:
    return repr(float(x))


def save_dataset(dataset: RegressionDataset, csv_path) -> tuple:
    """Write ``y,x1..xd`` CSV plus a sidecar JSON; returns both paths."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y"] + [f"x{j + 1}" for j in range(dataset.d)])
        for yi, row in zip(dataset.y, dataset.X):
            w.writerow([_fmt(yi)] + [_fmt(v) for v in row])
    meta_path = csv_path.with_suffix(".json")
    meta = {
        "m": dataset.m,
        "d": dataset.d,
        "noise_df": dataset.meta.get("noise_df"),
        "seed": dataset.meta.get("seed"),
        "theta_true": [float(v) for v in dataset.theta_true],
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return csv_path, meta_path


def load_dataset(csv_path) -> RegressionDataset:
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[0] != "y":
        raise ValueError(f"{csv_path}: expected header 'y,x1,...,xd'")
    data = np.array([[float(v) for v in row] for row in body], dtype=float)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{csv_path}: ragged rows")
    y, X = data[:, 0], data[:, 1:]
    meta_path = csv_path.with_suffix(".json")
    meta, theta_true = {}, np.full(X.shape[1], np.nan)
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        theta_true = np.asarray(meta.get("theta_true", theta_true), dtype=float)
    return RegressionDataset(X, y, theta_true, meta)


# --------------------------------------------------------------------------
# Gradient-noise models
# --------------------------------------------------------------------------


NOISE_KINDS = ("none", "gaussian", "student_t", "minibatch")


@dataclass
class NoiseModel:
    """Gradient noise xi(theta).

    ``none``, ``gaussian`` (sigma) and ``student_t`` (df, scale) are additive
    i.i.d. per coordinate and do not depend on theta.  ``minibatch`` draws
    ``batch_size`` sample indices of a finite-sum ``objective`` (uniformly,
    with replacement unless ``replace`` is False) and is the centered
    mini-batch gradient.
    """

    kind: str = "none"
    sigma: float = 1.0
    df: float = 5.0
    scale: float = 1.0
    objective: Optional[object] = None
    batch_size: int = 1
    replace: bool = True

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.kind == "student_t" and not (self.df > 0 and self.scale > 0):
            raise ValueError("df and scale must be positive")
        if self.kind == "minibatch":
            if self.objective is None or not hasattr(self.objective, "minibatch_grad"):
                raise ValueError("minibatch noise needs a finite-sum objective")
            if int(self.batch_size) < 1:
                raise ValueError("batch_size must be >= 1")
            self.batch_size = int(self.batch_size)
            if not self.replace and self.batch_size > self.objective.m:
                raise ValueError("batch_size exceeds the sample count without replacement")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def gaussian(cls, sigma: float = 1.0):
        return cls("gaussian", sigma=float(sigma))

    @classmethod
    def student_t(cls, df: float = 5.0, scale: float = 1.0):
        return cls("student_t", df=float(df), scale=float(scale))

    @classmethod
    def minibatch(cls, objective, batch_size: int = 2, replace: bool = True):
        return cls("minibatch", objective=objective, batch_size=batch_size, replace=replace)

    @property
    def additive(self) -> bool:
        return self.kind != "minibatch"

    def sample_additive(self, stream: RngStream, shape) -> np.ndarray:
        """Block of additive noise for one stream (``shape`` is (steps, d))."""
        if self.kind == "none":
            return np.zeros(shape)
        if self.kind == "gaussian":
            return self.sigma * stream.normal(shape)
        if self.kind == "student_t":
            return sample_student_t(stream, self.df, self.scale, shape)
        raise TypeError("minibatch noise is not additive")

    def sample_indices(self, stream: RngStream, steps: int) -> np.ndarray:
        m = self.objective.m
        if self.replace:
            return stream.integers(m, size=(steps, self.batch_size))
        gen = stream.lane(LANE_INDEX)
        return np.stack([gen.permutation(m)[: self.batch_size] for _ in range(steps)])

    def describe(self) -> dict:
        if self.kind == "none":
            return {"kind": "none"}
        if self.kind == "gaussian":
            return {"kind": "gaussian", "sigma": self.sigma}
        if self.kind == "student_t":
            return {"kind": "student_t", "df": self.df, "scale": self.scale}
        return {"kind": "minibatch", "batch_size": self.batch_size, "replace": self.replace}

    def moments(self, dim: int) -> tuple:
        """(E|xi|^2, E|xi|^4) for the additive kinds; ``inf`` when not finite."""
        if self.kind == "none":
            return 0.0, 0.0
        if self.kind == "gaussian":
            s2 = self.sigma**2
            return dim * s2, dim * (dim + 2) * s2 * s2
        if self.kind == "student_t":
            nu, a2 = self.df, self.scale**2
            v = a2 * nu / (nu - 2) if nu > 2 else math.inf
            k4 = 3 * a2 * a2 * nu * nu / ((nu - 2) * (nu - 4)) if nu > 4 else math.inf
            return dim * v, dim * k4 + dim * (dim - 1) * v * v
        bound = self.objective.sample_grad_bound()  # |xi| <= bound almost surely
        return bound**2, bound**4

    def moment_constant(self, dim: int) -> float:
        """Smallest L_xi compatible with the noise moment conditions.

        For state-independent noise this is the max of sqrt(E|xi|^2),
        E|xi|^2 and E|xi|^4 (the conditions are used in all three forms).
        Minibatch noise uses its almost-sure bound.  Zero noise returns a tiny
        positive value since the constant must be positive.
        """
        s2, s4 = self.moments(dim)
        value = max(math.sqrt(s2), s2, s4)
        return value if value > 0 else 1e-12


def draw_noise(model: NoiseModel, theta, stream: RngStream) -> np.ndarray:
    """One realization of xi(theta)."""
    theta = as_point(theta)
    d = theta.size
    if model.additive:
        return model.sample_additive(stream, (1, d))[0]
    idx = model.sample_indices(stream, 1)
    obj = model.objective
    mb = obj.minibatch_grad(theta[None, :], idx)[0]
    xi = mb - obj.grad(theta)
    if not np.all(np.isfinite(xi)):
        raise EvaluationError(f"non-finite per-sample gradient at theta={theta}")
    return xi
