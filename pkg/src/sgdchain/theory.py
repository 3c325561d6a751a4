"""Closed-form constants and sampled checks of the regularity conditions.

Calculators are pure functions of the declared constants. Checkers draw
points from a ball plus log-spaced shells beyond it and test the inequality
at every point; they produce sampling certificates, not proofs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .core import LocalGrowthFn, Objective, RegularityConstants, as_point
from .errors import (
    CertificationError,
    EvaluationError,
    NotFoundError,
    StepSizeError,
    UnsupportedObjectiveError,
)
from .noise import NoiseModel, RngStream

# --------------------------------------------------------------------------
# Step-size caps
# --------------------------------------------------------------------------


def _positive(**values):
    for name, v in values.items():
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be positive and finite, got {v}")


def _nonneg(**values):
    for name, v in values.items():
        if not (math.isfinite(v) and v >= 0):
            raise ValueError(f"{name} must be non-negative and finite, got {v}")


def _clamped_root_cap(alpha: float, K: float, scale: float) -> float:
    # [alpha - sqrt((alpha^2 - K) v 0)] / scale
    return (alpha - math.sqrt(max(alpha * alpha - K, 0.0))) / scale


def max_step_size(L: float, alpha: float, L_xi: float) -> float:
    """Largest step size for which the chain is ergodic with bounded moments."""
    _positive(L=L, alpha=alpha)
    _nonneg(L_xi=L_xi)
    K = 3.0 * L * L + L_xi
    return _clamped_root_cap(alpha, K, K)


def l_dagger(L_bar: float, L_xi: float, beta_over_alpha: float) -> float:
    """L_bar^2 + 16 * max of the three noise terms."""
    _positive(L_bar=L_bar)
    _nonneg(L_xi=L_xi, beta_over_alpha=beta_over_alpha)
    r = beta_over_alpha
    noise = max(
        L_xi**0.75 * (1.0 + r**3),
        L_xi**0.5 * (1.0 + r**2),
        L_xi * (1.0 + r**4),
    )
    return L_bar * L_bar + 16.0 * noise


def c_dagger(L_bar: float, alpha: float, L_xi: float, beta_over_alpha: float) -> float:
    """Secondary cap [alpha - sqrt((alpha^2 - 16 L_dagger) v 0)] / (64 L_dagger)."""
    _positive(alpha=alpha)
    Ld = l_dagger(L_bar, L_xi, beta_over_alpha)
    return _clamped_root_cap(alpha, 16.0 * Ld, 64.0 * Ld)


def contraction_rate(alpha: float, L_dagger: float, eta: float) -> float:
    """sqrt(1 - 2 alpha eta + 32 L_dagger eta^2), the fourth-moment contraction factor."""
    inside = 1.0 - 2.0 * alpha * eta + 32.0 * L_dagger * eta * eta
    if inside < 0:
        raise ValueError(f"contraction factor undefined at eta={eta}")
    return math.sqrt(inside)


@dataclass(frozen=True)
class StepSizeBounds:
    """Every cap that applies to a set of constants.

    ``caps`` maps cap names to values; ``overall_max`` is their minimum and
    ``binding`` the name of the cap that attains it.
    """

    c_L_alpha: float
    c_dagger: float
    L_bar: float
    L_dagger: float
    overall_max: float
    binding: str
    caps: Dict[str, float] = field(default_factory=dict)

    def check(self, eta: float, names=None) -> None:
        """Raise :class:`StepSizeError` if ``eta`` is not below the caps in ``names``."""
        check_step_size(eta, self.caps if names is None else {k: self.caps[k] for k in names})

    def to_dict(self) -> dict:
        return asdict(self)


def check_step_size(eta: float, caps: Dict[str, float]) -> None:
    violated = {k: v for k, v in caps.items() if not eta < v}
    if violated:
        name = min(violated, key=violated.get)
        raise StepSizeError(eta, violated[name], name)


def step_size_bounds(L: float, alpha: float, beta: float, L_xi: float,
                     theta_star_norm: float = 0.0,
                     L_tilde: Optional[float] = None) -> StepSizeBounds:
    """All step-size caps for the given constants.

    ``1``, ``1/(10 L_bar)``, ``c_L_alpha`` and ``c_dagger`` always apply;
    ``2/L_tilde`` is added when a Hessian growth constant is given.
    """
    _positive(L=L, alpha=alpha)
    _nonneg(beta=beta, L_xi=L_xi, theta_star_norm=theta_star_norm)
    L_bar = L * (1.0 + theta_star_norm)
    Ld = l_dagger(L_bar, L_xi, beta / alpha)
    caps = {
        "1": 1.0,
        "1/(10 L_bar)": 1.0 / (10.0 * L_bar),
        "c_L_alpha": max_step_size(L, alpha, L_xi),
        "c_dagger": c_dagger(L_bar, alpha, L_xi, beta / alpha),
    }
    if L_tilde is not None:
        _positive(L_tilde=L_tilde)
        caps["2/L_tilde"] = 2.0 / L_tilde
    binding = min(caps, key=caps.get)
    return StepSizeBounds(
        c_L_alpha=caps["c_L_alpha"],
        c_dagger=caps["c_dagger"],
        L_bar=L_bar,
        L_dagger=Ld,
        overall_max=caps[binding],
        binding=binding,
        caps=caps,
    )


# --------------------------------------------------------------------------
# Bias and moment constants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Proposition3Constants:
    D: float
    rho: float
    D_branches: tuple
    L_bar: float
    L_dagger: float

    def bias_bound(self, L_phi: float = 1.0) -> float:
        """Step-size free bias bound L_phi * sqrt(D)."""
        return L_phi * math.sqrt(self.D)


def proposition3_constants(L: float, alpha: float, beta: float, L_xi: float,
                           theta_star_norm: float, eta: float) -> Proposition3Constants:
    """Offset D and rate rho of the fourth-moment convergence bound.

    Requires eta < 1 ^ 1/(10 L_bar) ^ c_L_alpha ^ c_dagger.
    """
    bounds = step_size_bounds(L, alpha, beta, L_xi, theta_star_norm)
    bounds.check(eta, ["1", "1/(10 L_bar)", "c_L_alpha", "c_dagger"])
    Lb, Ld, r, ts = bounds.L_bar, bounds.L_dagger, beta / alpha, theta_star_norm
    first = (64.0 / alpha) * math.sqrt(
        Lb**4 + L_xi * (1 + r**4) + 512.0 * Lb**6 + 23.0 * L_xi**1.5 * (1 + r**6)
    )
    second = (8.0 / alpha) * (
        beta
        + (math.sqrt(alpha) + 2.0 * L / math.sqrt(alpha)) ** 2 * ts
        + L * ts
        + 6.0 * Lb**2
        + 9.0 * math.sqrt(L_xi) * (1 + r**2)
        + 16.0
    )
    rho = contraction_rate(alpha, Ld, eta)
    if not 0.0 < rho < 1.0:
        raise StepSizeError(eta, bounds.overall_max, "contraction (rho < 1)")
    return Proposition3Constants(max(first, second), rho, (first, second), Lb, Ld)


def mu2_bound(alpha: float, beta: float) -> float:
    """Upper bound 3 + 2 beta/alpha on the stationary second moment."""
    _positive(alpha=alpha)
    _nonneg(beta=beta)
    return 3.0 + 2.0 * beta / alpha


def fourth_moment_from_mu2(L: float, alpha: float, beta: float, L_xi: float, mu2: float) -> float:
    """Fourth-moment bound expressed through a second-moment value ``mu2``."""
    _positive(L=L, alpha=alpha)
    _nonneg(beta=beta, L_xi=L_xi, mu2=mu2)
    return (8.0 / (7.0 * alpha)) * (
        (beta + 6.0 * L**2 + 3.0 * math.sqrt(L_xi) + 16.0) * mu2
        + 16.0 * L**4
        + 2.0 * L_xi
        + 128.0 * L**6
        + 8.0 * L_xi**1.5
    )


def mu4_bound(L: float, alpha: float, beta: float, L_xi: float) -> float:
    """Upper bound on the stationary fourth moment."""
    return fourth_moment_from_mu2(L, alpha, beta, L_xi, mu2_bound(alpha, beta))


def theorem4_C(L: float, L_xi: float, alpha: float, beta: float, mu2: float,
               theta_star_norm: float = 0.0) -> float:
    """Constant C of the localized-dissipativity and convex bias bounds.

    ``mu2`` is the stationary second moment: an empirical estimate or
    :func:`mu2_bound`.
    """
    _positive(L=L, alpha=alpha)
    _nonneg(L_xi=L_xi, beta=beta, mu2=mu2, theta_star_norm=theta_star_norm)
    noise = math.sqrt(L_xi) * (1.0 + (beta / alpha) ** 2)
    ts2 = theta_star_norm**2
    return (
        2.0 * (3.0 * L * L + 3.0 * noise) * (mu2 + ts2)
        + 3.0 * L * L * ts2
        + 5.0 * L * L
        + 2.0 * noise
    )


def localized_bias_bound(C: float, eta: float, delta: float, g: LocalGrowthFn,
                         L_phi: float = 1.0) -> float:
    """L_phi (C eta / delta + g^{-1}(C eta)) for a Lipschitz test function."""
    _positive(eta=eta, delta=delta)
    return L_phi * (C * eta / delta + float(g.inverse(C * eta)))


def convex_bias_bound(C: float, eta: float, L_phi: float = 1.0) -> float:
    """L_phi C eta for phi = phi~ o f with f convex."""
    _positive(eta=eta)
    return L_phi * C * eta


@dataclass(frozen=True)
class Theorem5Constants:
    m: float
    M: float
    bias_bound: float


def theorem5_constants(L: float, L_tilde: float, L_xi: float, alpha: float, beta: float,
                       mu2: float, eta: float, g: Optional[LocalGrowthFn] = None,
                       L_phi: float = 1.0, theta_star_norm: float = 0.0,
                       strict: bool = True) -> Theorem5Constants:
    """Constants of the gradient-domination bias bound.

    The bound is g^{-1}(2 M eta / (2 - L_tilde eta)) + 2 M eta / (2 - L_tilde eta),
    scaled by ``L_phi``; ``g`` defaults to the identity. eta >= 2/L_tilde is
    always an error; with ``strict`` the remaining caps (1, c_L_alpha,
    c_dagger) are enforced too.
    """
    _positive(L_tilde=L_tilde, eta=eta)
    check_step_size(eta, {"2/L_tilde": 2.0 / L_tilde})
    if strict:
        bounds = step_size_bounds(L, alpha, beta, L_xi, theta_star_norm, L_tilde)
        bounds.check(eta, ["1", "c_L_alpha", "c_dagger", "2/L_tilde"])
    m = fourth_moment_from_mu2(L, alpha, beta, L_xi, mu2)
    M = 12.0 * L_tilde * (L + L_xi**0.5 + L_xi**0.25) ** 2 * (1.0 + m + m**0.75 + mu2)
    x = 2.0 * M * eta / (2.0 - L_tilde * eta)
    g = g or LocalGrowthFn.linear(1.0)
    return Theorem5Constants(m, M, L_phi * (float(g.inverse(x)) + x))


@dataclass(frozen=True)
class BiasConstants:
    D: Optional[float]
    rho: Optional[float]
    C: float
    M: Optional[float]
    m: Optional[float]
    mu2: float
    mu4: float
    mu2_source: str = "bound"

    def to_dict(self) -> dict:
        return asdict(self)


def bias_constants(constants: RegularityConstants, eta: Optional[float] = None,
                   theta_star_norm: float = 0.0, mu2: Optional[float] = None) -> BiasConstants:
    """Collect every bias constant that the declared constants support.

    Entries whose step-size condition fails (or that need missing constants)
    are left as None.
    """
    c = constants
    L_xi = c.L_xi if c.L_xi is not None else 0.0
    source = "bound" if mu2 is None else "empirical"
    mu2 = mu2_bound(c.alpha, c.beta) if mu2 is None else float(mu2)
    D = rho = M = m = None
    if eta is not None:
        try:
            p3 = proposition3_constants(c.L, c.alpha, c.beta, L_xi, theta_star_norm, eta)
            D, rho = p3.D, p3.rho
        except StepSizeError:
            pass
        if c.L_tilde is not None and eta < 2.0 / c.L_tilde:
            t5 = theorem5_constants(c.L, c.L_tilde, L_xi, c.alpha, c.beta, mu2, eta,
                                    c.g_spec, theta_star_norm=theta_star_norm, strict=False)
            M, m = t5.M, t5.m
    return BiasConstants(
        D=D,
        rho=rho,
        C=theorem4_C(c.L, L_xi, c.alpha, c.beta, mu2, theta_star_norm),
        M=M,
        m=m,
        mu2=mu2,
        mu4=mu4_bound(c.L, c.alpha, c.beta, L_xi),
        mu2_source=source,
    )


def constants_for(objective: Objective, noise: NoiseModel) -> RegularityConstants:
    """Objective constants with L_xi filled in from the noise model."""
    return objective.constants.replace(L_xi=noise.moment_constant(objective.dim))


def constants_report(L: float, alpha: float, beta: float, L_xi: float,
                     L_tilde: Optional[float] = None, theta_star_norm: float = 0.0,
                     eta: Optional[float] = None) -> dict:
    """Every closed-form constant as a plain dict.

    With ``eta`` the fourth-moment constants (D, rho) are included; an eta
    above their cap raises :class:`StepSizeError`.
    """
    b = step_size_bounds(L, alpha, beta, L_xi, theta_star_norm, L_tilde)
    out = {
        "inputs": {"L": L, "alpha": alpha, "beta": beta, "L_xi": L_xi,
                   "L_tilde": L_tilde, "theta_star_norm": theta_star_norm, "eta": eta},
        "c_L_alpha": b.c_L_alpha,
        "c_dagger": b.c_dagger,
        "L_bar": b.L_bar,
        "L_dagger": b.L_dagger,
        "overall_max": b.overall_max,
        "binding_cap": b.binding,
        "caps": b.caps,
        "mu2": mu2_bound(alpha, beta),
        "mu4": mu4_bound(L, alpha, beta, L_xi),
        "C": theorem4_C(L, L_xi, alpha, beta, mu2_bound(alpha, beta), theta_star_norm),
    }
    if eta is not None:
        p3 = proposition3_constants(L, alpha, beta, L_xi, theta_star_norm, eta)
        out["D"] = p3.D
        out["rho"] = p3.rho
        out["bias_bound_lipschitz"] = p3.bias_bound()
    return out


# --------------------------------------------------------------------------
# Sampled assumption checks
# --------------------------------------------------------------------------

REL_TOL = 1e-9
MAX_REPORTED = 20


@dataclass
class Certificate:
    """Outcome of a sampled check.

    ``violations`` lists up to ``MAX_REPORTED`` offending points (worst
    first); ``n_violations`` counts all of them.
    """

    assumption: str
    params: dict
    n_samples: int
    violations: List[dict]
    certified: bool
    n_violations: int = 0
    estimates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "assumption": self.assumption,
            "params": self.params,
            "n_samples": self.n_samples,
            "violations": self.violations,
            "certified": self.certified,
            "n_violations": self.n_violations,
            "estimates": self.estimates,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)

    def require(self) -> "Certificate":
        if not self.certified:
            raise CertificationError(f"{self.assumption} could not be certified", self)
        return self


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, LocalGrowthFn):
        return obj.describe()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _directions(stream: RngStream, n: int, d: int) -> np.ndarray:
    z = stream.normal((n, d))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return z / norms


def sample_points(dim: int, radius: float, n_samples: int, stream: RngStream,
                  center=None, shell_factor: float = 10.0, inner_radius: float = 0.0):
    """Points for a sampled check and a mask of those inside ``radius``.

    Half the points fill the ball (or annulus from ``inner_radius``) of the
    given radius, alternating volume-uniform and radius-uniform draws; the
    rest lie on log-spaced shells from ``radius`` to
    ``shell_factor * radius`` with random directions. The center itself is
    always included.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    n = int(n_samples)
    if n < 1:
        raise ValueError("n_samples must be >= 1")
    center = np.zeros(dim) if center is None else as_point(center, dim)
    n_in = max(1, n // 2)
    n_out = n - n_in
    u = stream.uniform(n_in)
    r_in = (inner_radius**dim + u * (radius**dim - inner_radius**dim)) ** (1.0 / dim)
    # in high dimension volume-uniform radii pile up near the boundary, so
    # every other inner point gets a radius uniform on [inner_radius, radius]
    r_in[1::2] = inner_radius + u[1::2] * (radius - inner_radius)
    inner = center + r_in[:, None] * _directions(stream, n_in, dim)
    inner[0] = center
    shells = np.geomspace(radius, shell_factor * radius, n_out) if n_out else np.empty(0)
    outer = center + shells[:, None] * _directions(stream, n_out, dim)
    pts = np.concatenate([inner, outer])
    inside = np.concatenate([np.ones(n_in, bool), np.zeros(n_out, bool)])
    return pts, inside


def _violation_list(pts, lhs, rhs, bad, severity):
    order = np.argsort(-severity[bad], kind="stable")[:MAX_REPORTED]
    idx = np.nonzero(bad)[0][order]
    return [{"theta": pts[i].tolist(), "lhs": float(lhs[i]), "rhs": float(rhs[i])} for i in idx]


def linear_growth_ratio(objective: Objective, pts) -> np.ndarray:
    g = objective.grad(pts)
    return np.linalg.norm(g, axis=-1) / (1.0 + np.linalg.norm(pts, axis=-1))


def check_linear_growth(objective: Objective, radius: float, n_samples: int,
                        stream: RngStream, L: Optional[float] = None) -> Certificate:
    """Empirical L_hat = max |grad f| / (1 + |theta|) over the sample.

    L_hat is a lower certificate for the true constant. The check is
    certified when the claimed ``L`` (default: the declared constant) is at
    least L_hat.
    """
    claim = objective.constants.L if L is None else float(L)
    pts, _ = sample_points(objective.dim, radius, n_samples, stream)
    ratio = linear_growth_ratio(objective, pts)
    if not np.all(np.isfinite(ratio)):
        raise EvaluationError(f"non-finite gradient for {objective.name}")
    L_hat = float(ratio.max())
    norms = np.linalg.norm(pts, axis=1)
    lhs = ratio * (1 + norms)
    rhs = claim * (1 + norms)
    bad = ratio > claim * (1 + REL_TOL)
    return Certificate(
        assumption="linear_growth",
        params={"objective": objective.describe(), "L": claim, "radius": radius},
        n_samples=len(pts),
        violations=_violation_list(pts, lhs, rhs, bad, ratio - claim),
        certified=not bad.any(),
        n_violations=int(bad.sum()),
        estimates={"L": L_hat},
    )


def dissipativity_residual(objective: Objective, pts, alpha: float) -> np.ndarray:
    """alpha |theta|^2 - <theta, grad f(theta)>, computed as <theta, alpha theta - grad f>."""
    return np.einsum("ij,ij->i", pts, alpha * pts - objective.grad(pts))


DEFAULT_ALPHA_GRID = tuple(np.geomspace(1e-4, 1e2, 61))


def check_dissipativity(objective: Objective, radius: float, n_samples: int, stream: RngStream,
                        alpha: Optional[float] = None, beta: Optional[float] = None,
                        alpha_grid=DEFAULT_ALPHA_GRID) -> Certificate:
    """Fit (alpha_hat, beta_hat) with <theta, grad f> >= alpha_hat |theta|^2 - beta_hat.

    A candidate alpha is accepted when the residual
    alpha |theta|^2 - <theta, grad f> on the outer shells never exceeds its
    maximum inside the ball, i.e. the residual does not grow in the tail.
    beta_hat is the largest positive residual over all samples. With
    ``alpha`` only that value is tried; otherwise the declared alpha and
    ``alpha_grid`` are scanned and the largest accepted value is kept. A
    given ``beta`` must also dominate beta_hat.
    """
    pts, inside = sample_points(objective.dim, radius, n_samples, stream)
    sq = np.einsum("ij,ij->i", pts, pts)
    inner_prod = np.einsum("ij,ij->i", pts, objective.grad(pts))
    if alpha is not None:
        candidates = [float(alpha)]
    else:
        candidates = sorted({objective.constants.alpha, *map(float, alpha_grid)}, reverse=True)

    def assess(a):
        res = dissipativity_residual(objective, pts, a)
        slack = REL_TOL * (1.0 + sq)
        inner_max = max(float(res[inside].max()), 0.0)
        tail_ok = bool(np.all(res[~inside] <= inner_max + slack[~inside]))
        return res, inner_max, tail_ok

    chosen = None
    for a in candidates:
        if not a > 0:
            raise ValueError("alpha must be positive")
        res, inner_max, ok = assess(a)
        if ok:
            chosen = (a, res, inner_max)
            break
    params = {"objective": objective.describe(), "radius": radius, "alpha": alpha, "beta": beta}
    if chosen is None:
        a = candidates[-1]
        res, inner_max, _ = assess(a)
        bad = res > inner_max + REL_TOL * (1.0 + sq)
        rhs = a * sq - inner_max
        return Certificate("dissipativity", params, len(pts),
                           _violation_list(pts, inner_prod, rhs, bad, res),
                           False, int(bad.sum()), {"alpha": None, "beta": None})
    a, res, _ = chosen
    beta_hat = max(float(res.max()), 0.0)
    claim = beta_hat if beta is None else float(beta)
    rhs = a * sq - claim
    bad = res > claim + REL_TOL * (1.0 + sq)
    params["alpha"] = a
    return Certificate(
        assumption="dissipativity",
        params=params,
        n_samples=len(pts),
        violations=_violation_list(pts, inner_prod, rhs, bad, res - claim),
        certified=not bad.any(),
        n_violations=int(bad.sum()),
        estimates={"alpha": a, "beta": beta_hat},
    )


LOCAL_KINDS = ("localized_dissipativity", "lojasiewicz")


def check_local_growth(objective: Objective, kind: str, g_spec: Optional[LocalGrowthFn] = None,
                       R: Optional[float] = None, n_samples: int = 10_000,
                       stream: Optional[RngStream] = None, alpha: Optional[float] = None,
                       beta: Optional[float] = None, gamma: Optional[float] = None) -> Certificate:
    """Check a two-regime growth condition around the minimizer.

    ``localized_dissipativity``: <grad f, theta - theta*> >= g(|theta - theta*|)
    inside radius R and >= alpha |theta - theta*|^2 - beta outside.
    ``lojasiewicz``: |grad f|^2 >= g(f - f*) inside and >= gamma (f - f*) outside.
    Missing arguments fall back to the objective's declared constants.
    """
    if kind not in LOCAL_KINDS:
        raise ValueError(f"kind must be one of {LOCAL_KINDS}, got {kind!r}")
    if objective.known_min is None:
        raise UnsupportedObjectiveError(f"{objective.name} has no known minimizer")
    c = objective.constants
    g_spec = g_spec or c.g_spec
    R = c.R_local if R is None else float(R)
    if g_spec is None or R is None:
        raise UnsupportedObjectiveError(f"{objective.name} declares no local growth function")
    stream = stream or RngStream(0, 0)
    theta_star = objective.known_min
    pts, inside = sample_points(objective.dim, R, n_samples, stream, center=theta_star)
    diff = pts - theta_star
    dist = np.linalg.norm(diff, axis=1)
    # the boundary belongs to the outer regime
    inside = dist < R
    grad = objective.grad(pts)
    params = {"objective": objective.describe(), "kind": kind, "R": R, "g": g_spec.describe()}
    if kind == "localized_dissipativity":
        alpha = c.alpha if alpha is None else float(alpha)
        beta = c.beta if beta is None else float(beta)
        params.update(alpha=alpha, beta=beta)
        lhs = np.einsum("ij,ij->i", grad, diff)
        rhs = np.where(inside, g_spec(dist), alpha * dist**2 - beta)
    else:
        gamma = c.gamma if gamma is None else float(gamma)
        if gamma is None:
            raise UnsupportedObjectiveError(f"{objective.name} declares no tail constant gamma")
        params.update(gamma=gamma)
        gap = objective.value(pts) - objective.f_star
        gap = np.maximum(gap, 0.0)
        lhs = np.einsum("ij,ij->i", grad, grad)
        rhs = np.where(inside, g_spec(gap), gamma * gap)
    bad = lhs < rhs - REL_TOL * (1.0 + np.abs(rhs))
    return Certificate(
        assumption=kind,
        params=params,
        n_samples=len(pts),
        violations=_violation_list(pts, lhs, rhs, bad, rhs - lhs),
        certified=not bad.any(),
        n_violations=int(bad.sum()),
        estimates={"min_margin": float((lhs - rhs).min())},
    )


def check_convexity(objective: Objective, radius: float, n_samples: int,
                    stream: RngStream) -> Certificate:
    """Look for negative Hessian eigenvalues on a sample and along a ray.

    Certified (convex on the sample) only when no negative curvature is found.
    """
    if not objective.has_hessian:
        raise UnsupportedObjectiveError(f"{objective.name} has no Hessian oracle")
    from .objectives import hessian_negativity_witness

    pts, _ = sample_points(objective.dim, radius, n_samples, stream)
    eig = np.linalg.eigvalsh(objective.hessian(pts))[:, 0]
    scale = np.abs(eig).max() if eig.size else 1.0
    bad = eig < -REL_TOL * max(scale, 1.0)
    violations = _violation_list(pts, eig, np.zeros_like(eig), bad, -eig)
    n_bad = int(bad.sum())
    estimates = {"min_eigenvalue": float(eig.min())}
    try:
        w = hessian_negativity_witness(objective)
        violations.insert(0, {"theta": w.theta.tolist(), "lhs": w.value, "rhs": 0.0,
                              "direction": w.u.tolist()})
        n_bad += 1
        estimates["witness"] = {"theta": w.theta.tolist(), "curvature": w.value}
    except NotFoundError:
        pass
    return Certificate(
        assumption="convexity",
        params={"objective": objective.describe(), "radius": radius},
        n_samples=len(pts),
        violations=violations[:MAX_REPORTED],
        certified=n_bad == 0,
        n_violations=n_bad,
        estimates=estimates,
    )
