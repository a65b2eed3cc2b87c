"""Rate functions, the scalar potential V(u) and the tilt-parameter formulas.

All densities here are graphon densities: edge density ``u`` in [0, 1] and
triangle density ``u**3`` for the constant graphon ``u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import bisect
from scipy.special import expit, logit, xlogy

# Grid used to bracket the stationary points of V before bisection.
GRID_POINTS = 10_000
ROOT_XTOL = 1e-12
TIE_TOL = 1e-9
ARGMAX_SEP = 1e-6


class ReplicaBreakingError(ValueError):
    """Raised when a closed-form tilt is requested outside the replica symmetric phase."""


def _check_prob(p: float, name: str = "p") -> None:
    if not (0.0 < p < 1.0):
        raise ValueError(f"{name} must lie in (0, 1), got {p}")


def rate_I_p(u, p: float):
    """Per-pair large-deviation cost of edge density ``u`` under G(n, p).

    ``I_p(u) = (u log(u/p) + (1-u) log((1-u)/(1-p))) / 2`` with the continuous
    limits at ``u = 0`` and ``u = 1``.
    """
    _check_prob(p)
    u = np.asarray(u, dtype=float)
    out = 0.5 * (xlogy(u, u) - u * math.log(p) + xlogy(1.0 - u, 1.0 - u) - (1.0 - u) * math.log1p(-p))
    return out[()] if out.ndim == 0 else out


def entropy_I(u):
    """``I(u) = u log u / 2 + (1-u) log(1-u) / 2``; zero at both endpoints."""
    u = np.asarray(u, dtype=float)
    out = 0.5 * (xlogy(u, u) + xlogy(1.0 - u, 1.0 - u))
    return out[()] if out.ndim == 0 else out


def log_odds(p):
    """``h_p = log(p / (1 - p))``."""
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0.0) | (p_arr >= 1.0)):
        raise ValueError(f"log-odds needs p in (0, 1), got {p}")
    out = logit(p_arr)
    return out[()] if out.ndim == 0 else out


def logistic(h):
    out = expit(np.asarray(h, dtype=float))
    return out[()] if out.ndim == 0 else out


# p below which the edge tilt stops being optimal for t near 1 (h_p = -1/2)
P_TILDE = math.exp(-0.5) / (1.0 + math.exp(-0.5))


@dataclass(frozen=True)
class ProblemSpec:
    """Source probability ``p`` and target density ``t`` of the upper-tail event."""

    p: float
    t: float
    threshold_mode: str = "binomial"

    def __post_init__(self):
        if not (0.0 < self.p < self.t < 1.0):
            raise ValueError(f"need 0 < p < t < 1, got p={self.p}, t={self.t}")
        if self.threshold_mode not in ("binomial", "graphon"):
            raise ValueError(f"threshold_mode must be 'binomial' or 'graphon', got {self.threshold_mode!r}")

    def threshold(self, n: int) -> Fraction:
        """Exact real threshold on the triangle count for graphs on ``n`` vertices."""
        t3 = Fraction(self.t) ** 3
        if self.threshold_mode == "binomial":
            return math.comb(n, 3) * t3
        return Fraction(n ** 3, 6) * t3

    def min_triangles(self, n: int) -> int:
        """Smallest integer triangle count in the event."""
        thr = self.threshold(n)
        return -((-thr.numerator) // thr.denominator)


@dataclass(frozen=True)
class TiltParams:
    """Gibbs parameters: edge field ``h``, triangle field ``beta``, exponent ``alpha``."""

    h: float
    beta: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")

    @classmethod
    def source(cls, p: float) -> "TiltParams":
        """The Erdos-Renyi law G(n, p) itself."""
        return cls(float(log_odds(p)), 0.0, 1.0)

    @classmethod
    def edge(cls, t: float) -> "TiltParams":
        return cls(float(log_odds(t)), 0.0, 1.0)

    @classmethod
    def triangle(cls, spec: ProblemSpec, alpha: float = 1.0, check: bool = True) -> "TiltParams":
        return cls(float(log_odds(spec.p)), beta_star(spec, alpha, check=check), alpha)

    @classmethod
    def hybrid(cls, q: float, t: float) -> "TiltParams":
        """Member of the ``beta_q`` family (alpha = 1) whose potential is stationary at ``t``."""
        b = beta_q(q, t)
        return cls(hybrid_h(b, 1.0, t), b, 1.0)

    def hamiltonian_coef(self, n: int) -> float:
        """Coefficient c with ``n^2 H(X) = h E + c T^alpha``."""
        return self.beta / n * (n ** 3 / 6.0) ** (1.0 - self.alpha)

    def as_dict(self) -> dict:
        return {"h": self.h, "beta": self.beta, "alpha": self.alpha}


def potential_V(u, params: TiltParams):
    """Return ``(V, V', V'')`` of ``V(u) = h u / 2 + beta u^(3 alpha) / 6 - I(u)``."""
    h, b, a = params.h, params.beta, params.alpha
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = 0.5 * h * u + b / 6.0 * u ** (3 * a) - entropy_I(u)
        if b == 0.0:
            tri1 = np.zeros_like(u)
            tri2 = np.zeros_like(u)
        else:
            tri1 = 0.5 * b * a * u ** (3 * a - 1)
            tri2 = 0.5 * b * a * (3 * a - 1) * u ** (3 * a - 2)
        dv = 0.5 * h + tri1 - 0.5 * (np.log(u) - np.log1p(-u))
        d2v = tri2 - 0.5 * (1.0 / u + 1.0 / (1.0 - u))
    if v.ndim == 0:
        return float(v), float(dv), float(d2v)
    return v, dv, d2v


def _dV(u, params: TiltParams) -> float:
    return potential_V(u, params)[1]


@dataclass(frozen=True)
class StationaryPoint:
    u: float
    kind: str  # "max", "min" or "boundary" (capped maximum at the right endpoint)
    value: float


@dataclass(frozen=True)
class VariationalResult:
    u_star: float
    value: float
    argmaxes: tuple[float, ...]
    stationary_points: tuple[StationaryPoint, ...] = field(default_factory=tuple)
    unique: bool = True

    @property
    def local_maxima(self) -> list[StationaryPoint]:
        return [s for s in self.stationary_points if s.kind in ("max", "boundary")]

    @property
    def local_minima(self) -> list[StationaryPoint]:
        return [s for s in self.stationary_points if s.kind == "min"]


def _solver_grid(r: float, points: int) -> np.ndarray:
    base = np.linspace(0.0, r, points + 1)[1:]
    tail = np.logspace(-14, -3, 45)
    extra = [r * tail]
    if r >= 1.0:
        base = base[:-1]
        extra.append(1.0 - tail)
    u = np.unique(np.concatenate([base, *extra]))
    return u[(u > 0.0) & (u <= r) & (u < 1.0)]


def maximize_V(params: TiltParams, cap: float | None = None, grid: int = GRID_POINTS) -> VariationalResult:
    """Global maximiser of V on ``[0, cap]`` (default ``[0, 1]``) and all interior stationary points.

    V' tends to +inf at 0 and -inf at 1, so maxima are interior unless a cap
    below 1 cuts the domain while V' is still positive, in which case the cap
    itself is reported as a ``"boundary"`` maximum.
    """
    r = 1.0 if cap is None else float(cap)
    if not (0.0 < r <= 1.0):
        raise ValueError(f"cap must lie in (0, 1], got {cap}")
    u = _solver_grid(r, grid)
    d = potential_V(u, params)[1]
    points: list[StationaryPoint] = []
    sgn = np.sign(d)
    for k in np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]:
        root = bisect(_dV, u[k], u[k + 1], args=(params,), xtol=ROOT_XTOL, maxiter=200)
        kind = "max" if d[k] > 0 else "min"
        points.append(StationaryPoint(float(root), kind, float(potential_V(root, params)[0])))
    # roots landing exactly on a grid point
    for k in np.nonzero(sgn[1:-1] == 0)[0] + 1:
        left, right = sgn[k - 1], sgn[k + 1]
        if left == right:
            continue  # V' touches zero without crossing: an inflection, not an extremum
        kind = "max" if left > 0 else "min"
        points.append(StationaryPoint(float(u[k]), kind, float(potential_V(u[k], params)[0])))
    points.sort(key=lambda s: s.u)
    if r < 1.0 and d[-1] > 0:
        points.append(StationaryPoint(r, "boundary", float(potential_V(r, params)[0])))
    maxima = [s for s in points if s.kind in ("max", "boundary")]
    if not maxima:  # V' vanishes nowhere on the grid: monotone increasing up to the cap
        points.append(StationaryPoint(r, "boundary", float(potential_V(r, params)[0])))
        maxima = points[-1:]
    best = max(s.value for s in maxima)
    ties = sorted(s.u for s in maxima if best - s.value <= TIE_TOL)
    distinct = [ties[0]] + [x for a, x in zip(ties, ties[1:]) if x - a > ARGMAX_SEP]
    return VariationalResult(
        u_star=distinct[0],
        value=best,
        argmaxes=tuple(distinct),
        stationary_points=tuple(points),
        unique=len(distinct) == 1,
    )


def beta_star(spec: ProblemSpec, alpha: float = 1.0, check: bool = True) -> float:
    """Triangle-tilt field ``(h_t - h_p) / (alpha t^(3 alpha - 1))``.

    With ``check`` the pair must be replica symmetric, where the LDP rate is
    the differentiable ``I_p`` and this is the only admissible field.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if check:
        from .phase import is_replica_symmetric

        if not is_replica_symmetric(spec):
            raise ReplicaBreakingError(
                f"(p, t) = ({spec.p}, {spec.t}) is replica breaking; use the minorant subdifferential")
    p, t = spec.p, spec.t
    return float((log_odds(t) - log_odds(p)) / (alpha * t ** (3 * alpha - 1)))


def hybrid_h(beta: float, alpha: float, u_star: float) -> float:
    """Edge field that makes ``u_star`` a stationary point of V for the given ``beta``."""
    _check_prob(u_star, "u_star")
    return float(log_odds(u_star) - beta * alpha * u_star ** (3 * alpha - 1))


def beta_q(q: float, t: float) -> float:
    """``(h_t - h_q) / t^2``: zero at q = t (edge tilt), the triangle tilt at q = p."""
    _check_prob(q, "q")
    _check_prob(t, "t")
    if q > t:
        raise ValueError(f"beta_q needs q <= t, got q={q}, t={t}")
    return float((log_odds(t) - log_odds(q)) / t ** 2)


def beta1_bound(u_star: float, alpha: float) -> float:
    """Field at which ``V''(u_star) = 0`` along the hybrid family (needs alpha > 1/3)."""
    if alpha <= 1.0 / 3.0:
        return math.inf
    return u_star ** (2 - 3 * alpha) / (alpha * (3 * alpha - 1) * u_star * (1 - u_star))


def is_unique_global_max_at(params: TiltParams, u_star: float, cap: float | None = None) -> bool:
    res = maximize_V(params, cap=cap)
    return res.unique and abs(res.u_star - u_star) <= ARGMAX_SEP


def beta0_boundary(u_star: float, alpha: float, scan: int = 200, tol: float = 1e-7) -> float:
    """Largest ``beta`` keeping ``u_star`` the unique global maximiser along the hybrid family.

    Scans ``[0, beta_1]`` for the first failure, then bisects the bracket.
    """
    _check_prob(u_star, "u_star")

    def ok(b: float) -> bool:
        return is_unique_global_max_at(TiltParams(hybrid_h(b, alpha, u_star), b, alpha), u_star)

    b1 = beta1_bound(u_star, alpha)
    if not math.isfinite(b1):
        raise ValueError("beta_0 search needs alpha > 1/3")
    grid = np.linspace(0.0, b1, scan + 1)
    lo = 0.0
    for b in grid[1:]:
        if not ok(b):
            hi = b
            break
        lo = b
    else:
        return b1
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
