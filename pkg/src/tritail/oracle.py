"""Exact answers by exhaustive enumeration of all labeled graphs on few vertices."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from .estimator import log_unnormalized_weight
from .glauber import ConstraintSet, acceptance_prob
from .graph import Graph, pair_arrays
from .rates import ProblemSpec, TiltParams

MAX_N = 7
MAX_N_LONG = 8


@dataclass(frozen=True)
class JointDistribution:
    """Number of labeled graphs with each (edge count, triangle count)."""

    n: int
    counts: np.ndarray  # shape (C(n,2)+1, C(n,3)+1), int64

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def cells(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Non-empty cells as arrays ``(E, T, count)``."""
        E, T = np.nonzero(self.counts)
        return E, T, self.counts[E, T]

    def as_dict(self) -> dict[tuple[int, int], int]:
        E, T, c = self.cells()
        return {(int(e), int(t)): int(k) for e, t, k in zip(E, T, c)}

    def densities(self) -> tuple[np.ndarray, np.ndarray]:
        E, T, _ = self.cells()
        n = self.n
        return 2.0 * E / (n * n), 6.0 * T / (n * n * n)

    def mask(self, constraint: ConstraintSet | None) -> np.ndarray:
        E, T, _ = self.cells()
        if constraint is None:
            return np.ones(E.size, dtype=bool)
        return np.array([constraint.contains_counts(int(e), int(t), self.n) for e, t in zip(E, T)])

    def log_gibbs_weights(self, params: TiltParams) -> np.ndarray:
        """``n^2 H`` per cell: ``h E + coef T^alpha``."""
        E, T, _ = self.cells()
        return params.h * E + params.hamiltonian_coef(self.n) * T.astype(float) ** params.alpha

    def log_partition(self, params: TiltParams, constraint: ConstraintSet | None = None) -> float:
        _, _, c = self.cells()
        keep = self.mask(constraint)
        return float(logsumexp(self.log_gibbs_weights(params)[keep] + np.log(c[keep])))

    def log_cell_probs(self, params: TiltParams, constraint: ConstraintSet | None = None) -> np.ndarray:
        """Log probability of a single graph in each cell (``-inf`` outside the constraint)."""
        lw = self.log_gibbs_weights(params) - self.log_partition(params, constraint)
        return np.where(self.mask(constraint), lw, -np.inf)

    def to_csv(self, path) -> None:
        E, T, c = self.cells()
        with open(path, "w") as fh:
            fh.write("n,E,T,count\n")
            for e, t, k in zip(E.tolist(), T.tolist(), c.tolist()):
                fh.write(f"{self.n},{e},{t},{k}\n")

    @classmethod
    def from_csv(cls, path) -> "JointDistribution":
        rows = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        n = int(rows[0, 0])
        if np.any(rows[:, 0] != n):
            raise ValueError(f"{path}: mixed vertex counts")
        counts = np.zeros((math.comb(n, 2) + 1, math.comb(n, 3) + 1), dtype=np.int64)
        counts[rows[:, 1], rows[:, 2]] = rows[:, 3]
        return cls(n, counts)


@lru_cache(maxsize=None)
def _enumerate(n: int) -> JointDistribution:
    pi, pj = pair_arrays(n)
    counts = np.zeros((math.comb(n, 2) + 1, math.comb(n, 3) + 1), dtype=np.int64)
    K.gray_code_histogram(n, pi, pj, counts)
    counts.setflags(write=False)
    return JointDistribution(n, counts)


def enumerate_joint(n: int, allow_long: bool = False) -> JointDistribution:
    """(E, T) histogram over all ``2^C(n,2)`` labeled graphs via Gray-code flips."""
    limit = MAX_N_LONG if allow_long else MAX_N
    if not (2 <= n <= limit):
        hint = "" if allow_long or n > MAX_N_LONG else " (n=8 needs allow_long=True)"
        raise ValueError(f"enumeration supports 2 <= n <= {limit}, got {n}{hint}")
    return _enumerate(n)


def _log_source(joint: JointDistribution, p: float) -> np.ndarray:
    E, _, _ = joint.cells()
    m = math.comb(joint.n, 2)
    return E * math.log(p) + (m - E) * math.log1p(-p)


def _hits(joint: JointDistribution, spec: ProblemSpec) -> np.ndarray:
    _, T, _ = joint.cells()
    return T >= spec.min_triangles(joint.n)


def exact_mu(n: int, spec: ProblemSpec, constraint: ConstraintSet | None = None) -> float:
    """``P(T >= threshold)`` under G(n, p); with a constraint, ``P(W | A)``."""
    return exact_tail(n, spec.p, spec.min_triangles(n), constraint)


def exact_tail(n: int, p: float, min_triangles: int, constraint: ConstraintSet | None = None) -> float:
    """``P(T >= min_triangles)`` under G(n, p) for any integer threshold (no ``p < t`` requirement)."""
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie in (0, 1), got {p}")
    joint = enumerate_joint(n)
    _, T, c = joint.cells()
    lp = _log_source(joint, p)
    keep = joint.mask(constraint)
    hit = (T >= min_triangles) & keep
    if not hit.any():
        return 0.0
    out = logsumexp(lp[hit] + np.log(c[hit]))
    if constraint is not None:
        out -= logsumexp(lp[keep] + np.log(c[keep]))
    return float(math.exp(out))


def exact_mu_direct(n: int, spec: ProblemSpec) -> float:
    """Same as :func:`exact_mu` by summing over every graph with a naive triangle count (n <= 5)."""
    if n > 5:
        raise ValueError("direct summation is limited to n <= 5")
    pairs = list(combinations(range(n), 2))
    thr = spec.min_triangles(n)
    total = 0.0
    for mask in range(1 << len(pairs)):
        edges = {pairs[k] for k in range(len(pairs)) if mask >> k & 1}
        T = sum(1 for a, b, c in combinations(range(n), 3)
                if (a, b) in edges and (b, c) in edges and (a, c) in edges)
        if T >= thr:
            E = len(edges)
            total += spec.p ** E * (1 - spec.p) ** (len(pairs) - E)
    return total


def exact_psi(n: int, params: TiltParams, constraint: ConstraintSet | None = None) -> float:
    """Free energy ``(1/n^2) log sum_X exp(n^2 H(X))``, optionally over ``A`` only."""
    return enumerate_joint(n).log_partition(params, constraint) / (n * n)


@dataclass(frozen=True)
class EstimatorMoments:
    mean: float
    second: float

    @property
    def variance(self) -> float:
        return self.second - self.mean ** 2


def exact_estimator_moments(n: int, spec: ProblemSpec, tilt: TiltParams,
                            constraint: ConstraintSet | None = None) -> EstimatorMoments:
    """First and second moments of ``qhat`` under the (restricted) tilt.

    ``qhat`` is built exactly as the estimator does: the unnormalised log
    weight plus ``n^2`` times the exact free-energy gap, both restricted to
    ``A`` when a constraint is given.
    """
    joint = enumerate_joint(n)
    _, _, c = joint.cells()
    eps, tau = joint.densities()
    source = TiltParams.source(spec.p)
    gap = n * n * (exact_psi(n, tilt, constraint) - exact_psi(n, source, constraint))
    log_q = joint.log_cell_probs(tilt, constraint)
    log_qhat = log_unnormalized_weight(eps, tau, n, spec.p, tilt) + gap
    hit = _hits(joint, spec) & joint.mask(constraint)
    if not hit.any():
        return EstimatorMoments(0.0, 0.0)
    lc = np.log(c[hit])
    mean = math.exp(logsumexp(lc + log_q[hit] + log_qhat[hit]))
    second = math.exp(logsumexp(lc + log_q[hit] + 2 * log_qhat[hit]))
    return EstimatorMoments(mean, second)


def edge_count_law_given_event(n: int, spec: ProblemSpec) -> np.ndarray:
    """Exact law of E given the event under G(n, p), as a probability vector over E."""
    joint = enumerate_joint(n)
    E, _, c = joint.cells()
    w = np.exp(_log_source(joint, spec.p)) * c * _hits(joint, spec)
    out = np.bincount(E, weights=w, minlength=math.comb(n, 2) + 1)
    return out / out.sum()


@dataclass(frozen=True)
class GlauberMatrixCheck:
    P: np.ndarray
    pi: np.ndarray
    states: list[Graph]
    stationarity_residual: float
    detailed_balance_residual: float


def exact_glauber_matrix(n: int, params: TiltParams,
                         constraint: ConstraintSet | None = None) -> GlauberMatrixCheck:
    """Full transition matrix of the (restricted) heat-bath chain and its balance residuals."""
    if n > 4:
        raise ValueError("transition matrix is limited to n <= 4")
    pairs = list(combinations(range(n), 2))
    m = len(pairs)
    graphs = [Graph.from_edges(n, [pairs[k] for k in range(m) if s >> k & 1]) for s in range(1 << m)]
    keep = [constraint is None or constraint.contains(g) for g in graphs]
    states = [s for s in range(1 << m) if keep[s]]
    index = {s: k for k, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for s in states:
        g = graphs[s]
        row = index[s]
        for k, (i, j) in enumerate(pairs):
            phi = acceptance_prob(g, i, j, params)
            on, off = s | (1 << k), s & ~(1 << k)
            for target, prob in ((on, phi), (off, 1.0 - phi)):
                dest = index.get(target, row) if keep[target] else row
                P[row, dest] += prob / m
    coef = params.hamiltonian_coef(n)
    logw = np.array([params.h * graphs[s].E + coef * float(graphs[s].T) ** params.alpha for s in states])
    pi = np.exp(logw - logsumexp(logw))
    flow = pi[:, None] * P
    return GlauberMatrixCheck(
        P=P, pi=pi, states=[graphs[s] for s in states],
        stationarity_residual=float(np.abs(pi @ P - pi).max()),
        detailed_balance_residual=float(np.abs(flow - flow.T).max()),
    )
