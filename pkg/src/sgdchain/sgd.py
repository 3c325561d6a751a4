"""Constant step size SGD as a Markov chain.

The recursion is ``theta_{k+1} = theta_k - eta * (grad f(theta_k) + xi_{k+1}(theta_k))``.
Replications advance in lock-step as rows of one ``(N, d)`` array; each row
reads its noise from its own :class:`~sgdchain.noise.RngStream`, so a
replication's path depends only on ``(seed, stream_id)`` and never on how many
other replications share its batch or which worker runs it.

Iterates are indexed from 1: the recording window is ``theta_{burn_in+1}``
through ``theta_{n_iters}``.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import Objective, SgdConfig, TestFunction, Trajectory, as_point
from .errors import DivergenceError, EmptyWindowError
from .noise import NoiseModel, RngStream

DIVERGENCE_NORM = 1e12
# noise is pre-drawn in blocks of at most this many numbers per chunk
BLOCK_ELEMENTS = 1 << 20
# replications per lock-step batch; fixed so results never depend on workers
DEFAULT_CHUNK = 1024


@dataclass
class SgdState:
    theta: np.ndarray
    k: int = 0


def _check_stable(theta_sq, k, stream_ids=()):
    bad = ~(theta_sq <= DIVERGENCE_NORM**2)
    if np.any(bad):
        ids = np.asarray(stream_ids)[np.atleast_1d(bad)] if len(stream_ids) else ()
        worst = np.nanmax(np.where(np.isfinite(theta_sq), theta_sq, np.inf))
        raise DivergenceError(k, float(np.sqrt(worst)), ids)


def sgd_step(state: SgdState, objective: Objective, noise: NoiseModel, eta: float,
             stream: RngStream) -> SgdState:
    """Advance the chain by one step."""
    if not eta > 0:
        raise ValueError("step size must be positive")
    theta = state.theta
    d = theta.size
    if noise.additive:
        g = objective.grad(theta)
        if noise.kind != "none":
            g = g + noise.sample_additive(stream, (1, d))[0]
    else:
        idx = noise.sample_indices(stream, 1)
        g = objective.minibatch_grad(theta[None, :], idx)[0]
    new = theta - eta * g
    _check_stable(np.array([new @ new]), state.k + 1, (stream.stream_id,))
    return SgdState(new, state.k + 1)


# --------------------------------------------------------------------------
# Lock-step ensemble engine
# --------------------------------------------------------------------------


@dataclass
class EnsembleRun:
    """Accumulators for N replications sharing one configuration."""

    config: SgdConfig
    stream_ids: np.ndarray
    names: List[str]
    sums: Dict[str, np.ndarray]
    sumsq: Dict[str, np.ndarray]
    sum_sq_norm: np.ndarray
    sum_quartic_norm: np.ndarray
    sum_theta: np.ndarray
    final_theta: np.ndarray
    iterates: Optional[np.ndarray] = None
    series: Dict[str, np.ndarray] = field(default_factory=dict)
    batch_len: Optional[int] = None
    batch_sums: Dict[str, np.ndarray] = field(default_factory=dict)
    trace_sum: Dict[str, np.ndarray] = field(default_factory=dict)
    trace_sumsq: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_recorded(self) -> int:
        return self.config.n_recorded

    @property
    def size(self) -> int:
        return len(self.stream_ids)

    def means(self, name: str) -> np.ndarray:
        return self.sums[name] / self.n_recorded

    def scaled_sums(self, name: str) -> np.ndarray:
        """n^{-1/2} sum_k phi(theta_k) for every replication."""
        return self.sums[name] / np.sqrt(self.n_recorded)

    def trace_mean(self, name: str) -> np.ndarray:
        """Ensemble mean of phi(theta_k) for k = 1..n_iters."""
        return self.trace_sum[name] / self.size

    def trace_se(self, name: str) -> np.ndarray:
        n = self.size
        mean = self.trace_sum[name] / n
        var = np.maximum(self.trace_sumsq[name] / n - mean**2, 0.0) * n / max(n - 1, 1)
        return np.sqrt(var / n)

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(
            n_recorded=self.n_recorded,
            seed=self.config.seed,
            stream_id=int(self.stream_ids[i]),
            sums={k: float(v[i]) for k, v in self.sums.items()},
            sumsq={k: float(v[i]) for k, v in self.sumsq.items()},
            sum_sq_norm=float(self.sum_sq_norm[i]),
            sum_quartic_norm=float(self.sum_quartic_norm[i]),
            sum_theta=self.sum_theta[i].copy(),
            final_theta=self.final_theta[i].copy(),
            burn_in=self.config.burn_in,
            iterates=None if self.iterates is None else self.iterates[i],
            series={k: v[i] for k, v in self.series.items()},
            batch_len=self.batch_len,
            batch_sums={k: v[i] for k, v in self.batch_sums.items()},
        )


def _run_chunk(objective, noise, config, test_fns, stream_ids, store_iterates,
               record_series, batch_len, trace):
    N = len(stream_ids)
    d = config.dim
    eta = config.eta
    n_iters, burn = config.n_iters, config.burn_in
    n_rec = n_iters - burn
    streams = [RngStream(config.seed, s) for s in stream_ids]
    theta = np.tile(config.theta0, (N, 1))

    names = [t.name for t in test_fns]
    sums = {n: np.zeros(N) for n in names}
    sumsq = {n: np.zeros(N) for n in names}
    s2 = np.zeros(N)
    s4 = np.zeros(N)
    stheta = np.zeros((N, d))
    iterates = np.empty((N, n_rec, d)) if store_iterates else None
    series = {n: np.empty((N, n_rec)) for n in names} if record_series else {}
    n_batches = n_rec // batch_len if batch_len else 0
    bsums = {n: np.zeros((N, n_batches)) for n in names} if batch_len else {}
    tr_sum = {n: np.empty(n_iters) for n in names} if trace else {}
    tr_sq = {n: np.empty(n_iters) for n in names} if trace else {}

    width = d if noise.additive else noise.batch_size
    block = max(1, min(n_iters, BLOCK_ELEMENTS // max(N * width, 1)))
    buf, pos = None, block
    for k in range(n_iters):
        if pos == block:
            steps = min(block, n_iters - k)
            if noise.kind == "none":
                buf = None
            elif noise.additive:
                buf = np.stack([noise.sample_additive(s, (steps, d)) for s in streams], axis=1)
            else:
                buf = np.stack([noise.sample_indices(s, steps) for s in streams], axis=1)
            pos = 0
        if noise.additive:
            g = objective.grad(theta)
            if buf is not None:
                g = g + buf[pos]
        else:
            g = objective.minibatch_grad(theta, buf[pos])
        pos += 1
        theta = theta - eta * g
        sq = np.einsum("ij,ij->i", theta, theta)
        _check_stable(sq, k + 1, stream_ids)

        j = k - burn
        if j < 0 and not trace:
            continue
        for t, name in zip(test_fns, names):
            v = t(theta)
            if trace:
                tr_sum[name][k] = v.sum()
                tr_sq[name][k] = (v * v).sum()
            if j >= 0:
                sums[name] += v
                sumsq[name] += v * v
                if record_series:
                    series[name][:, j] = v
                if batch_len and j < n_batches * batch_len:
                    bsums[name][:, j // batch_len] += v
        if j >= 0:
            s2 += sq
            s4 += sq * sq
            stheta += theta
            if store_iterates:
                iterates[:, j, :] = theta
    return dict(sums=sums, sumsq=sumsq, s2=s2, s4=s4, stheta=stheta, final=theta,
                iterates=iterates, series=series, bsums=bsums, tr_sum=tr_sum, tr_sq=tr_sq)


def _chunk_task(args):
    return _run_chunk(*args)


def default_workers() -> int:
    env = os.environ.get("SGDCHAIN_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def run_ensemble(objective: Objective, noise: NoiseModel, config: SgdConfig,
                 test_fns: Sequence[TestFunction] = (), n_replications: Optional[int] = None,
                 stream_ids=None, *, store_iterates: bool = False, record_series: bool = False,
                 batch_len: Optional[int] = None, trace: bool = False, workers: int = 1,
                 chunk_size: int = DEFAULT_CHUNK) -> EnsembleRun:
    """Run replications ``stream_ids`` (default ``0..n_replications-1``).

    Chunks of ``chunk_size`` replications run in lock-step; with ``workers``
    > 1 chunks are spread over processes. Chunk results are combined in
    stream order, so the output does not depend on ``workers``.
    """
    if stream_ids is None:
        if n_replications is None:
            n_replications = 1
        stream_ids = np.arange(int(n_replications), dtype=np.uint64)
    stream_ids = np.asarray(stream_ids, dtype=np.uint64).reshape(-1)
    if stream_ids.size < 1:
        raise ValueError("need at least one replication")
    if config.dim != objective.dim:
        raise ValueError(f"theta0 has dimension {config.dim}, objective has {objective.dim}")
    if config.n_recorded < 1:
        raise EmptyWindowError("empty recording window")
    if batch_len is not None:
        batch_len = int(batch_len)
        if batch_len < 1:
            raise ValueError("batch_len must be positive")
    test_fns = list(test_fns)
    names = [t.name for t in test_fns]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate test function names: {names}")

    chunks = [stream_ids[i:i + chunk_size] for i in range(0, stream_ids.size, chunk_size)]
    tasks = [(objective, noise, config, test_fns, [int(s) for s in c], store_iterates,
              record_series, batch_len, trace) for c in chunks]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            parts = list(pool.map(_chunk_task, tasks))
    else:
        parts = [_run_chunk(*t) for t in tasks]

    def cat(key):
        return {n: np.concatenate([p[key][n] for p in parts]) for n in parts[0][key]}

    tr_sum, tr_sq = {}, {}
    if trace:
        for n in names:
            tr_sum[n] = parts[0]["tr_sum"][n].copy()
            tr_sq[n] = parts[0]["tr_sq"][n].copy()
            for p in parts[1:]:
                tr_sum[n] += p["tr_sum"][n]
                tr_sq[n] += p["tr_sq"][n]
    return EnsembleRun(
        config=config,
        stream_ids=stream_ids,
        names=names,
        sums=cat("sums"),
        sumsq=cat("sumsq"),
        sum_sq_norm=np.concatenate([p["s2"] for p in parts]),
        sum_quartic_norm=np.concatenate([p["s4"] for p in parts]),
        sum_theta=np.concatenate([p["stheta"] for p in parts]),
        final_theta=np.concatenate([p["final"] for p in parts]),
        iterates=np.concatenate([p["iterates"] for p in parts]) if store_iterates else None,
        series=cat("series"),
        batch_len=batch_len,
        batch_sums=cat("bsums"),
        trace_sum=tr_sum,
        trace_sumsq=tr_sq,
    )


def run_trajectory(objective: Objective, noise: NoiseModel, config: SgdConfig,
                   test_fns: Sequence[TestFunction] = (), stream_id: int = 0, *,
                   store_iterates: bool = False, record_series: bool = False,
                   batch_len: Optional[int] = None) -> Trajectory:
    """Run a single chain and return its accumulators."""
    run = run_ensemble(objective, noise, config, test_fns, stream_ids=[stream_id],
                       store_iterates=store_iterates, record_series=record_series,
                       batch_len=batch_len)
    return run.trajectory(0)


def _phi_name(phi) -> str:
    return phi.name if isinstance(phi, TestFunction) else str(phi)


def scaled_partial_sum(trajectory: Trajectory, phi, center: Optional[float] = None) -> float:
    """n^{-1/2} sum_k phi(theta_k) over the recording window.

    With ``center`` (an estimate of the stationary mean of phi) the centered
    sum n^{-1/2} sum_k (phi(theta_k) - center) is returned instead.
    """
    n = trajectory.n_recorded
    if n < 1:
        raise EmptyWindowError("trajectory has an empty recording window")
    total = trajectory.sums[_phi_name(phi)]
    if center is None:
        return total / np.sqrt(n)
    return (total - n * center) / np.sqrt(n)


def polyak_ruppert_average(trajectory: Trajectory) -> np.ndarray:
    """(1/n) sum_k theta_k over the recording window."""
    if trajectory.n_recorded < 1:
        raise EmptyWindowError("trajectory has an empty recording window")
    return trajectory.sum_theta / trajectory.n_recorded


def write_iterates_csv(trajectory: Trajectory, path) -> Path:
    """Dump stored post-burn-in iterates as ``k,theta_1,...,theta_d``."""
    if trajectory.iterates is None:
        raise ValueError("trajectory was run without iterate storage")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = trajectory.iterates.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"theta_{j + 1}" for j in range(d)])
        for j, row in enumerate(trajectory.iterates):
            w.writerow([trajectory.burn_in + 1 + j] + [repr(float(v)) for v in row])
    return path


@dataclass
class ForgettingResult:
    """Per-iteration gap between two matched-noise ensembles."""

    gap: np.ndarray
    se: np.ndarray
    mean_a: np.ndarray
    mean_b: np.ndarray

    def first_below(self, factor: float = 10.0) -> Optional[int]:
        """First iteration k (1-based) with gap_k < factor * se_k, else None."""
        hits = np.nonzero(self.gap < factor * self.se)[0]
        return int(hits[0]) + 1 if hits.size else None


def matched_noise_gap(objective: Objective, noise: NoiseModel, config: SgdConfig, theta0_alt,
                      phi: TestFunction, n_replications: int, workers: int = 1) -> ForgettingResult:
    """Run two ensembles from different starts with common random numbers.

    ``gap_k`` is |mean_i phi(theta_k^i) - mean_i phi(theta'_k^i)| and ``se_k``
    the Monte Carlo standard error of the first ensemble's mean.
    """
    alt = config.replace(theta0=as_point(theta0_alt, config.dim))
    cfg = config.replace(burn_in=0) if config.burn_in else config
    alt = alt.replace(burn_in=0) if alt.burn_in else alt
    a = run_ensemble(objective, noise, cfg, [phi], n_replications, trace=True, workers=workers)
    b = run_ensemble(objective, noise, alt, [phi], n_replications, trace=True, workers=workers)
    ma, mb = a.trace_mean(phi.name), b.trace_mean(phi.name)
    return ForgettingResult(np.abs(ma - mb), a.trace_se(phi.name), ma, mb)
