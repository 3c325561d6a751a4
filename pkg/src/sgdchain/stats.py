"""Monte Carlo aggregation and diagnostics for SGD ensembles.

Covers normality checks of scaled partial sums, long-run variance estimation
(batch means over one chain, or replication across chains), normal
confidence intervals and step-size sweeps of the stationary bias.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from statistics import NormalDist
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats as sps

from .core import Objective, SgdConfig, TestFunction, Trajectory
from .errors import EmptyWindowError, SgdChainError, UnsupportedObjectiveError
from .noise import NoiseModel
from .sgd import run_ensemble
from .theory import check_step_size, constants_for, step_size_bounds


class InsufficientDataError(SgdChainError, ValueError):
    """Not enough observations for the requested estimator."""


class DegenerateEnsembleError(SgdChainError, ValueError):
    """An ensemble with zero spread cannot be tested for normality."""


# --------------------------------------------------------------------------
# Ensembles of scaled partial sums
# --------------------------------------------------------------------------


@dataclass
class McEnsemble:
    """Scaled partial sums n^{-1/2} sum_k phi(theta_k), one per replication."""

    values: np.ndarray
    stream_ids: np.ndarray
    base_seed: int
    phi: str
    n: int
    config: dict = field(default_factory=dict)
    means: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size < 2:
            raise InsufficientDataError("an ensemble needs at least two replications")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("ensemble values must be finite")

    @property
    def size(self) -> int:
        return self.values.size

    def mean(self) -> float:
        return float(self.values.mean())

    def se(self) -> float:
        return float(self.values.std(ddof=1) / math.sqrt(self.size))

    def split(self):
        """Two halves (first and second block of stream ids)."""
        h = self.size // 2
        return self.values[:h], self.values[h:]

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["stream_id", "value"])
            for s, v in zip(self.stream_ids, self.values):
                w.writerow([int(s), repr(float(v))])
        return path


def clt_experiment(objective: Objective, noise: NoiseModel, config: SgdConfig, phi: TestFunction,
                   N: int, base_seed: Optional[int] = None, workers: int = 1) -> McEnsemble:
    """N independent chains with stream ids 0..N-1, returning their scaled sums."""
    if int(N) < 2:
        raise InsufficientDataError("N must be at least 2")
    if base_seed is not None:
        config = config.replace(seed=int(base_seed))
    run = run_ensemble(objective, noise, config, [phi], int(N), workers=workers)
    snapshot = {
        "objective": objective.describe(),
        "noise": noise.describe(),
        "sgd": config.describe(),
        "phi": phi.name,
        "N": int(N),
    }
    return McEnsemble(run.scaled_sums(phi.name), run.stream_ids, config.seed, phi.name,
                      config.n_recorded, snapshot, run.means(phi.name))


# --------------------------------------------------------------------------
# Normality diagnostics
# --------------------------------------------------------------------------

NULL_SEED = 20_231_117
SKEW_TOL = 0.15
KURT_TOL = 0.3


def _ks_fitted(sorted_z: np.ndarray) -> np.ndarray:
    """KS distance of each row of standardized sorted samples from N(0,1)."""
    n = sorted_z.shape[-1]
    cdf = sps.norm.cdf(sorted_z)
    i = np.arange(1, n + 1)
    return np.maximum((i / n - cdf).max(axis=-1), (cdf - (i - 1) / n).max(axis=-1))


@lru_cache(maxsize=32)
def ks_critical_value(n: int, level: float = 0.05, n_null: int = 2000, seed: int = NULL_SEED) -> float:
    """Monte Carlo critical value of KS against a normal with fitted mean and sd.

    Simulates ``n_null`` normal samples of size ``n``, standardizes each by its
    own mean and sd and returns the (1 - level) quantile of the statistic.
    """
    rng = np.random.default_rng(seed)
    stats_ = np.empty(n_null)
    rows = max(1, (1 << 22) // max(n, 1))
    for start in range(0, n_null, rows):
        x = rng.standard_normal((min(rows, n_null - start), n))
        z = (x - x.mean(axis=1, keepdims=True)) / x.std(axis=1, ddof=1, keepdims=True)
        stats_[start:start + len(x)] = _ks_fitted(np.sort(z, axis=1))
    return float(np.quantile(stats_, 1.0 - level))


@dataclass
class NormalityReport:
    n: int
    mean: float
    sd: float
    skewness: float
    excess_kurtosis: float
    ks_stat: float
    mc_critical_value: float
    skew_tol: float
    kurt_tol: float
    passed: bool
    histogram: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _values(data) -> np.ndarray:
    return np.asarray(data.values if isinstance(data, McEnsemble) else data, dtype=float)


def normality_test(ensemble, skew_tol: float = SKEW_TOL, kurt_tol: float = KURT_TOL,
                   level: float = 0.05, n_null: int = 2000) -> NormalityReport:
    """Moment and Lilliefors-style KS checks of normality.

    Passes when the KS statistic is below the simulated critical value and
    both |skewness| and |excess kurtosis| are inside their tolerances.
    """
    x = _values(ensemble)
    n = x.size
    if n < 100:
        raise InsufficientDataError("normality_test needs at least 100 values")
    sd = float(x.std(ddof=1))
    if not sd > 0:
        raise DegenerateEnsembleError("ensemble has zero variance")
    mean = float(x.mean())
    skew = float(sps.skew(x, bias=False))
    kurt = float(sps.kurtosis(x, fisher=True, bias=False))
    ks = float(_ks_fitted(np.sort((x - mean) / sd)))
    crit = ks_critical_value(n, level, n_null)
    counts, edges = np.histogram(x, bins="fd")
    passed = ks < crit and abs(skew) < skew_tol and abs(kurt) < kurt_tol
    return NormalityReport(
        n=n, mean=mean, sd=sd, skewness=skew, excess_kurtosis=kurt, ks_stat=ks,
        mc_critical_value=crit, skew_tol=skew_tol, kurt_tol=kurt_tol, passed=bool(passed),
        histogram={"edges": edges.tolist(), "counts": counts.tolist()},
    )


@dataclass
class TwoSampleReport:
    ks_stat: float
    p_value: float
    critical_value: float
    level: float
    passed: bool
    n_a: int
    n_b: int

    def to_dict(self) -> dict:
        return asdict(self)


def two_sample_ks(a, b, level: float = 0.05) -> TwoSampleReport:
    """Two-sample KS test; passes (same distribution not rejected) when p > level."""
    a, b = _values(a), _values(b)
    res = sps.ks_2samp(a, b)
    na, nb = a.size, b.size
    # asymptotic critical value c(level) sqrt((na + nb) / (na nb))
    crit = math.sqrt(-0.5 * math.log(level / 2.0)) * math.sqrt((na + nb) / (na * nb))
    return TwoSampleReport(float(res.statistic), float(res.pvalue), crit, level,
                           bool(res.pvalue > level), na, nb)


# --------------------------------------------------------------------------
# Long-run variance
# --------------------------------------------------------------------------


def default_batch_len(n: int) -> int:
    """sqrt(n) rounded to the nearest power of two."""
    if n < 1:
        raise EmptyWindowError("no observations")
    return 1 << max(0, int(round(math.log2(math.sqrt(n)))))


def batch_means_variance(series, batch_len: Optional[int] = None) -> float:
    """Non-overlapping batch-means estimate of the long-run variance.

    ``batch_len`` times the sample variance of the floor(n / batch_len) batch
    averages. At least 10 batches are required.
    """
    x = np.asarray(series, dtype=float).reshape(-1)
    batch_len = default_batch_len(x.size) if batch_len is None else int(batch_len)
    if batch_len < 1:
        raise ValueError("batch_len must be positive")
    k = x.size // batch_len
    if k < 10:
        raise InsufficientDataError(f"only {k} batches of length {batch_len}; need at least 10")
    means = x[: k * batch_len].reshape(k, batch_len).mean(axis=1)
    return _batch_var(means, batch_len)


def _batch_var(batch_avgs: np.ndarray, batch_len: int) -> float:
    if np.ptp(batch_avgs) == 0:
        return 0.0
    return float(batch_len * batch_avgs.var(ddof=1))


def asymp_var_batch_means(trajectory: Trajectory, phi, batch_len: Optional[int] = None) -> float:
    """Batch-means long-run variance of phi along one trajectory.

    Uses the stored phi series when present, otherwise batch sums recorded
    during the run (whose length must match ``batch_len``).
    """
    name = phi.name if isinstance(phi, TestFunction) else str(phi)
    if name in trajectory.series:
        return batch_means_variance(trajectory.series[name], batch_len)
    if name in trajectory.batch_sums:
        L = trajectory.batch_len
        if batch_len is not None and int(batch_len) != L:
            raise ValueError(f"trajectory recorded batches of length {L}, not {batch_len}")
        sums = trajectory.batch_sums[name]
        if sums.size < 10:
            raise InsufficientDataError(f"only {sums.size} batches of length {L}; need at least 10")
        return _batch_var(sums / L, L)
    raise ValueError(f"trajectory has neither a series nor batch sums for {name!r}")


def asymp_var_replication(values) -> float:
    """Sample variance of N >= 30 centered scaled partial sums."""
    x = _values(values)
    if x.size < 30:
        raise InsufficientDataError("replication estimator needs N >= 30")
    if np.ptp(x) == 0:
        return 0.0
    return float(x.var(ddof=1))


def confidence_interval(mean: float, sigma2: float, n: int, level: float = 0.95) -> tuple:
    """mean -/+ z_{(1+level)/2} sqrt(sigma2 / n)."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    if sigma2 < 0 or not math.isfinite(sigma2):
        raise ValueError("sigma2 must be finite and non-negative")
    if int(n) < 1:
        raise ValueError("n must be >= 1")
    half = NormalDist().inv_cdf(0.5 + level / 2.0) * math.sqrt(sigma2 / n)
    return mean - half, mean + half


@dataclass
class MeanEstimate:
    mean: float
    se: float
    sigma2: float
    n: int
    batch_len: int

    def ci(self, level: float = 0.95) -> tuple:
        return confidence_interval(self.mean, self.sigma2, self.n, level)


def estimate_mean(objective: Objective, noise: NoiseModel, config: SgdConfig, phi: TestFunction,
                  batch_len: Optional[int] = None, stream_id: int = 0) -> MeanEstimate:
    """Long-run average of phi along one chain with a batch-means standard error."""
    n = config.n_recorded
    if n < 1000:
        raise InsufficientDataError("estimate_mean needs at least 1000 recorded iterations")
    batch_len = default_batch_len(n) if batch_len is None else int(batch_len)
    run = run_ensemble(objective, noise, config, [phi], stream_ids=[stream_id], batch_len=batch_len)
    traj = run.trajectory(0)
    sigma2 = asymp_var_batch_means(traj, phi, batch_len)
    return MeanEstimate(traj.mean(phi.name), math.sqrt(sigma2 / n), sigma2, n, batch_len)


# --------------------------------------------------------------------------
# Bias sweeps
# --------------------------------------------------------------------------


def fit_log_log(etas, bias):
    """Least-squares slope and intercept of log|bias| on log eta.

    When the curve is convex in log-log (slopes between neighbours
    nondecreasing) and there are more than three points, only the three
    smallest step sizes are used. Returns (slope, intercept, indices used).
    """
    etas = np.asarray(etas, dtype=float)
    y = np.log(np.abs(np.asarray(bias, dtype=float)))
    x = np.log(etas)
    idx = np.arange(etas.size)
    if etas.size > 3:
        slopes = np.diff(y) / np.diff(x)
        if np.all(np.diff(slopes) >= 0):
            idx = idx[:3]
    slope, intercept = np.polyfit(x[idx], y[idx], 1)
    return float(slope), float(intercept), idx.tolist()


@dataclass
class BiasCurve:
    etas: List[float]
    bias: List[float]
    se: List[float]
    estimates: List[float]
    phi_star: float
    exponent: float
    intercept: float
    fit_indices: List[int]
    comparisons: List[str]
    N: int
    n: int
    base_seed: int
    traces: dict = field(default_factory=dict)

    def strictly_increasing(self) -> bool:
        """True when every adjacent increase is significant at 2 SE."""
        return all(c == "increase" for c in self.comparisons)

    def to_dict(self, include_traces: bool = False) -> dict:
        out = asdict(self)
        if not include_traces:
            out.pop("traces")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write_trace_csv(self, path) -> Path:
        """Long-format ``eta,k,abs_bias`` rows for every traced step size."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eta", "k", "abs_bias"])
            for eta in self.etas:
                tr = self.traces.get(repr(float(eta)))
                if tr is None:
                    continue
                for k, v in enumerate(tr, start=1):
                    w.writerow([repr(float(eta)), k, repr(float(v))])
        return path


def compare_adjacent(values, ses, n_se: float = 2.0) -> List[str]:
    out = []
    for a, b, sa, sb in zip(values[:-1], values[1:], ses[:-1], ses[1:]):
        margin = n_se * math.hypot(sa, sb)
        out.append("increase" if b - a > margin else "decrease" if a - b > margin else "inconclusive")
    return out


def bias_sweep(objective: Objective, noise: NoiseModel, phi: TestFunction, etas: Sequence[float],
               n_iters: int, N: int, base_seed: int = 0, theta0=None, burn_in: int = 0,
               workers: int = 1, enforce_cap: bool = True, trace: bool = False) -> BiasCurve:
    """Estimate pi_eta(phi) - phi(theta*) for each step size.

    Each estimate averages the trajectory means of N chains (stream ids
    0..N-1, shared across step sizes). With ``enforce_cap`` every step size
    must lie below all theoretical caps for the objective and noise.
    ``trace`` also records |ensemble mean of phi(theta_k) - phi(theta*)| per k.
    """
    if objective.known_min is None:
        raise UnsupportedObjectiveError(
            f"{objective.name} has no known minimizer; bias sweeps support "
            "quadratic, quadsine, simplified-cauchy and simplified-bz"
        )
    etas = [float(e) for e in etas]
    if len(etas) < 2 or any(b <= a for a, b in zip(etas[:-1], etas[1:])):
        raise ValueError("etas must be strictly increasing with at least two values")
    if int(N) < 2:
        raise InsufficientDataError("N must be at least 2")
    if enforce_cap:
        c = constants_for(objective, noise)
        bounds = step_size_bounds(c.L, c.alpha, c.beta, c.L_xi,
                                  float(np.linalg.norm(objective.known_min)), c.L_tilde)
        for eta in etas:
            check_step_size(eta, bounds.caps)
    theta0 = objective.known_min + 1.0 if theta0 is None else theta0
    phi_star = float(phi(objective.known_min))
    est, ses, traces = [], [], {}
    for eta in etas:
        cfg = SgdConfig(eta, n_iters, theta0, burn_in=burn_in, seed=base_seed)
        run = run_ensemble(objective, noise, cfg, [phi], int(N), trace=trace, workers=workers)
        means = run.means(phi.name)
        est.append(float(means.mean()))
        ses.append(float(means.std(ddof=1) / math.sqrt(means.size)))
        if trace:
            traces[repr(eta)] = np.abs(run.trace_mean(phi.name) - phi_star).tolist()
    bias = [e - phi_star for e in est]
    slope, intercept, idx = fit_log_log(etas, bias)
    return BiasCurve(etas, bias, ses, est, phi_star, slope, intercept, idx,
                     compare_adjacent(bias, ses), int(N), int(n_iters) - int(burn_in),
                     int(base_seed), traces)
