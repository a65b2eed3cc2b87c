"""Phase diagnostics: convex minorants, S_alpha membership and tilt optimality checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import xlogy

from .rates import (
    ARGMAX_SEP, P_TILDE, ProblemSpec, ReplicaBreakingError, TiltParams,
    log_odds, maximize_V, rate_I_p,
)

HULL_POINTS = 10_000
HULL_TOL = 1e-9
# extra abscissae placed this close to the query so adjacent hull slopes approximate the derivative
SLOPE_PROBE = 1e-7


@dataclass
class MinorantHull:
    """Lower convex hull of sampled points ``(x_i, y_i)``."""

    x: np.ndarray
    y: np.ndarray
    vertices: np.ndarray  # indices into x/y, increasing

    @property
    def hx(self) -> np.ndarray:
        return self.x[self.vertices]

    @property
    def hy(self) -> np.ndarray:
        return self.y[self.vertices]

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.hy) / np.diff(self.hx)

    def value_at(self, xq):
        return np.interp(xq, self.hx, self.hy)

    def contains(self, xq: float, yq: float, tol: float = HULL_TOL) -> bool:
        """True if ``(xq, yq)`` lies on the minorant up to ``tol`` in y."""
        return bool(yq - self.value_at(xq) <= tol)

    def subdifferential(self, xq: float) -> tuple[float, float]:
        """Slope interval of the minorant at ``xq``; a single slope inside a segment."""
        hx, s = self.hx, self.slopes
        if xq < hx[0] or xq > hx[-1]:
            raise ValueError(f"query {xq} outside hull range [{hx[0]}, {hx[-1]}]")
        k = int(np.searchsorted(hx, xq))
        if k < len(hx) and hx[k] == xq:
            left = s[k - 1] if k > 0 else -math.inf
            right = s[k] if k < len(s) else math.inf
            return float(left), float(right)
        return float(s[k - 1]), float(s[k - 1])


def convex_minorant(x, y) -> MinorantHull:
    """Greatest convex minorant of sorted samples by Andrew's monotone chain."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if x.size < 2:
        raise ValueError("need at least two points")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    xs, ys = x.tolist(), y.tolist()
    hull: list[int] = []
    for k in range(len(xs)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b unless it lies strictly below the chord a -> k
            u = (xs[b] - xs[a]) * (ys[k] - ys[a])
            v = (ys[b] - ys[a]) * (xs[k] - xs[a])
            # relative slack absorbs rounding on collinear triples
            if u - v <= 1e-13 * (abs(u) + abs(v)):
                hull.pop()
            else:
                break
        hull.append(k)
    return MinorantHull(x, y, np.array(hull, dtype=np.int64))


def _rate_in_x(p: float, alpha: float, x: np.ndarray) -> np.ndarray:
    return rate_I_p(np.power(x, 1.0 / (3.0 * alpha)), p)


def _hull_grid(x_t: float, points: int) -> np.ndarray:
    x = np.linspace(0.0, 1.0, points + 1)
    extra = [x_t, x_t - SLOPE_PROBE, x_t + SLOPE_PROBE]
    x = np.concatenate([x, [v for v in extra if 0.0 < v < 1.0]])
    return np.unique(x)


def in_S_alpha(spec: ProblemSpec, alpha: float, points: int = HULL_POINTS):
    """Membership of ``(p, t)`` in S_alpha and the admissible triangle-field interval.

    Two checks: ``(t^(3a), I_p(t))`` lies on the convex minorant of
    ``x -> I_p(x^(1/(3a)))``, and ``(beta/6) u^(3a) - I_p(u)`` with the
    matching field is maximised uniquely at ``t``. Returns
    ``(member, (beta_lo, beta_hi))``; the interval is ``None`` off the hull.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    p, t = spec.p, spec.t
    x_t = t ** (3 * alpha)
    x = _hull_grid(x_t, points)
    hull = convex_minorant(x, _rate_in_x(p, alpha, x))
    if not hull.contains(x_t, float(rate_I_p(t, p))):
        return False, None
    lo, hi = hull.subdifferential(x_t)
    interval = (6.0 * lo, 6.0 * hi)
    b = float((log_odds(t) - log_odds(p)) / (alpha * t ** (3 * alpha - 1)))
    res = maximize_V(TiltParams(float(log_odds(p)), b, alpha))
    unique = res.unique and abs(res.u_star - t) <= ARGMAX_SEP
    return unique, interval


def is_replica_symmetric(spec: ProblemSpec) -> bool:
    """Replica symmetry coincides with membership in S_{2/3}."""
    return in_S_alpha(spec, 2.0 / 3.0)[0]


def edge_tilt_gap(p: float, points: int = 10_000):
    """Return ``(g, t_tilde)``; ``g(t) < 0`` on ``(t_tilde, 1)`` where the edge tilt is not optimal.

    ``g(t) = Gamma(1) - Gamma(t)`` compares the clique candidate with the
    constant one. ``t_tilde`` is ``None`` when ``p >= P_TILDE`` since then
    ``g'(1) <= 0`` and no such interval reaches 1.
    """
    i0 = float(rate_I_p(0.0, p))
    i1 = float(rate_I_p(1.0, p))
    hp = float(log_odds(p))

    def g(t):
        t = np.asarray(t, dtype=float)
        # (t^2 - t) h_t written with xlogy so that g(1) = 0 exactly
        tilt = t * (t - 1) * np.log(t) + t * xlogy(1 - t, 1 - t) - hp * (t * t - t)
        out = t * t * i1 + (1 - t * t) * i0 - rate_I_p(t, p) + 0.5 * tilt
        return out[()] if out.ndim == 0 else out

    if p >= P_TILDE:
        return g, None
    ts = np.linspace(p, 1.0, points + 1)[1:-1]
    vals = g(ts)
    nonneg = np.nonzero(vals >= 0)[0]
    if nonneg.size == 0:
        return g, float(p)
    k = nonneg[-1]
    if k == ts.size - 1:  # negativity interval thinner than the grid
        return g, float(ts[-1])
    return g, float(brentq(g, ts[k], ts[k + 1], xtol=1e-14))


def edge_tilt_slope_at_one(p: float) -> float:
    """``g'(1) = -h_p - 1/2``; positive exactly when ``p < P_TILDE``."""
    return float(-log_odds(p) - 0.5)


def _gamma_terms(spec: ProblemSpec) -> tuple[float, float]:
    p, t = spec.p, spec.t
    dh = float(log_odds(t) - log_odds(p))
    g_t = float(rate_I_p(t, p)) + 0.5 * dh * t
    g_1 = t * t * float(rate_I_p(1.0, p)) + (1 - t * t) * float(rate_I_p(0.0, p)) + 0.5 * dh * t * t
    return g_t, g_1


def edge_tilt_second_moment_lower_bound(spec: ProblemSpec) -> float:
    """Lower bound on the edge tilt's asymptotic second moment from the constant and clique candidates."""
    g_t, g_1 = _gamma_terms(spec)
    return -min(g_t, g_1) + g_t - 2.0 * float(rate_I_p(spec.t, spec.p))


def _min_G(spec: ProblemSpec, params: TiltParams, r: float) -> float:
    p, t = spec.p, spec.t
    hp = float(log_odds(p))
    dh, b, a = params.h - hp, params.beta, params.alpha

    def G(u):
        return rate_I_p(u, p) + 0.5 * dh * u + b / 6.0 * np.power(u, 3 * a)

    if r <= t:
        return float(G(t)) if r == t else math.inf
    u = np.linspace(t, r, 4001)
    vals = G(u)
    k = int(np.argmin(vals))
    best = float(vals[k])
    if k == 0:
        return best
    lo, hi = u[max(k - 1, 0)], u[min(k + 1, u.size - 1)]
    res = minimize_scalar(G, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
    return min(best, float(res.fun))


def asymptotic_second_moment(spec: ProblemSpec, params: TiltParams, cap: float | None = None) -> float:
    """Limit of ``(1/n^2) log E_Q[qhat^2]`` evaluated over constant graphons.

    The event contributes ``-min_{t<=u<=r} G(u)`` and the free-energy gap
    ``max_{0<=u<=r} F(u)``, with ``G = I_p + (h-h_p)u/2 + beta u^(3a)/6`` and
    ``F = (h-h_p)u/2 + beta u^(3a)/6 - I_p``. Only meaningful in the replica
    symmetric phase, where the constant graphon is the optimiser.
    """
    if not is_replica_symmetric(spec):
        raise ReplicaBreakingError(f"(p, t) = ({spec.p}, {spec.t}) is replica breaking")
    r = 1.0 if cap is None else float(cap)
    event = _min_G(spec, params, r)
    free = maximize_V(params, cap=cap).value + 0.5 * math.log1p(-spec.p)
    return -event + free


@dataclass
class PhaseCurve:
    """Stationary points of V(u; h_p, beta, alpha) along a grid of beta."""

    p: float
    alpha: float
    betas: np.ndarray
    rows: list[tuple[float, float, str]] = field(default_factory=list)  # (beta, u, kind)

    def argmax_path(self) -> np.ndarray:
        best: dict[float, float] = {}
        for b, u, kind in self.rows:
            if kind == "global_max" and b not in best:
                best[b] = u
        return np.array([best[b] for b in self.betas])


def _classify(res) -> list[tuple[float, str]]:
    out = []
    for s in res.stationary_points:
        if s.kind == "min":
            out.append((s.u, "local_min"))
        elif any(abs(s.u - a) <= ARGMAX_SEP for a in res.argmaxes):
            out.append((s.u, "global_max"))
        else:
            out.append((s.u, "local_max"))
    return out


def phase_curve(p: float, alpha: float, beta_grid) -> PhaseCurve:
    """All stationary points of V at ``h = h_p`` for each beta, classified."""
    hp = float(log_odds(p))
    betas = np.asarray(beta_grid, dtype=float)
    curve = PhaseCurve(p, alpha, betas)
    for b in betas:
        res = maximize_V(TiltParams(hp, float(b), alpha))
        for u, kind in _classify(res):
            curve.rows.append((float(b), u, kind))
    return curve


def phase_transition(p: float, alpha: float = 1.0, beta_max: float = 20.0,
                     scan: int = 400, tol: float = 1e-10):
    """Locate the beta where the global argmax of V(.; h_p, beta, alpha) jumps.

    Returns ``(beta_c, u_low, u_high)`` with the two tied maximisers at
    ``beta_c``, or ``None`` if the argmax moves continuously on ``[0, beta_max]``.
    """
    hp = float(log_odds(p))

    def argmax(b: float) -> float:
        return maximize_V(TiltParams(hp, b, alpha)).u_star

    betas = np.linspace(0.0, beta_max, scan + 1)
    path = np.array([argmax(b) for b in betas])
    jumps = np.nonzero(np.diff(path) > 0.05)[0]
    if jumps.size == 0:
        return None
    k = int(jumps[0])
    lo, hi = float(betas[k]), float(betas[k + 1])
    split = 0.5 * (path[k] + path[k + 1])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if argmax(mid) < split:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), argmax(lo), argmax(hi)


@dataclass
class PhaseReport:
    p: float
    t: float
    replica_symmetric: bool
    s_alpha_membership: dict[float, bool]
    beta_subdifferential: dict[float, tuple[float, float] | None]
    beta_star: dict[float, float | None]
    t_tilde: float | None
    edge_tilt_optimal: bool
    p_tilde: float = P_TILDE

    def to_dict(self) -> dict:
        out: dict = {"p": self.p, "t": self.t, "replica_symmetric": self.replica_symmetric,
                     "p_tilde": self.p_tilde, "t_tilde": self.t_tilde,
                     "edge_tilt_optimal": self.edge_tilt_optimal}
        for a, member in self.s_alpha_membership.items():
            key = f"{a:.6g}"
            out[f"s_alpha[{key}]"] = member
            interval = self.beta_subdifferential[a]
            out[f"beta_lo[{key}]"] = None if interval is None else interval[0]
            out[f"beta_hi[{key}]"] = None if interval is None else interval[1]
            out[f"beta_star[{key}]"] = self.beta_star[a]
        return out


def phase_report(spec: ProblemSpec, alphas=(2.0 / 3.0, 1.0)) -> PhaseReport:
    alphas = sorted({2.0 / 3.0, *map(float, alphas)})
    member, interval, bstar = {}, {}, {}
    for a in alphas:
        ok, iv = in_S_alpha(spec, a)
        member[a], interval[a] = ok, iv
        bstar[a] = float((log_odds(spec.t) - log_odds(spec.p)) / (a * spec.t ** (3 * a - 1))) if ok else None
    _, t_tilde = edge_tilt_gap(spec.p)
    g_t, g_1 = _gamma_terms(spec)
    return PhaseReport(
        p=spec.p, t=spec.t,
        replica_symmetric=member[2.0 / 3.0],
        s_alpha_membership=member,
        beta_subdifferential=interval,
        beta_star=bstar,
        t_tilde=t_tilde,
        edge_tilt_optimal=not (g_1 < g_t),
    )


__all__ = [
    "MinorantHull", "PhaseCurve", "PhaseReport", "P_TILDE", "asymptotic_second_moment",
    "convex_minorant", "edge_tilt_gap", "edge_tilt_second_moment_lower_bound",
    "edge_tilt_slope_at_one", "in_S_alpha", "is_replica_symmetric", "phase_curve",
    "phase_report", "phase_transition",
]
