"""Glauber dynamics for the edge-triangle Gibbs measure, optionally restricted to a constraint set."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels as K
from .graph import Graph, pair_arrays
from .rates import ProblemSpec, TiltParams, log_odds, maximize_V

CHUNK = 1 << 20
DEFAULT_BATCHES = 32
INIT_RETRIES = 100


@dataclass(frozen=True)
class ConstraintSet:
    """Graphs with triangle density in ``[tau_lo, tau_hi]`` and edge density at most ``epsilon_cap``."""

    tau_lo: float = 0.0
    tau_hi: float = 1.0
    epsilon_cap: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.tau_lo <= self.tau_hi <= 1.0):
            raise ValueError(f"need 0 <= tau_lo <= tau_hi <= 1, got [{self.tau_lo}, {self.tau_hi}]")
        if not (0.0 <= self.epsilon_cap <= 1.0):
            raise ValueError(f"epsilon_cap must lie in [0, 1], got {self.epsilon_cap}")
        if self.tau_lo > 0.0 and self.tau_hi < 1.0:
            warnings.warn("interior triangle-density interval: the restricted state space may be "
                          "disconnected under single-edge flips", stacklevel=3)

    @classmethod
    def cap(cls, r: float) -> "ConstraintSet":
        """``A_r``: triangle density at most ``r^3`` and edge density at most ``r``."""
        if not (0.0 < r <= 1.0):
            raise ValueError(f"cap r must lie in (0, 1], got {r}")
        return cls(0.0, r ** 3, r)

    @property
    def edge_cap_density(self) -> float:
        """Largest edge density compatible with both bounds (for initial states)."""
        return min(self.epsilon_cap, self.tau_hi ** (1.0 / 3.0))

    def contains_counts(self, E: int, T: int, n: int) -> bool:
        # same float expressions as the kernel so both agree on the boundary
        eps = 2.0 * E / (n * n)
        tau = 6.0 * T / (n * n * n)
        return not (eps > self.epsilon_cap or tau < self.tau_lo or tau > self.tau_hi)

    def contains(self, g: Graph) -> bool:
        return self.contains_counts(g.E, g.T, g.n)

    def describe(self) -> str:
        return f"tau in [{self.tau_lo:.6g}, {self.tau_hi:.6g}], eps <= {self.epsilon_cap:.6g}"


def triangle_power_table(n: int, alpha: float) -> np.ndarray:
    """``T**alpha`` for every possible triangle count on ``n`` vertices."""
    return np.arange(math.comb(n, 3) + 1, dtype=float) ** alpha


def acceptance_prob(g: Graph, i: int, j: int, params: TiltParams) -> float:
    """Heat-bath probability that edge ij is present given the rest of the graph."""
    L = g.common_neighbors(i, j)
    M = g.T - L if g.has_edge(i, j) else g.T
    a = params.alpha
    coef = params.hamiltonian_coef(g.n)
    return float(K.logistic(params.h + coef * ((M + L) ** a - M ** a)))


@dataclass
class ChainState:
    """A single Glauber chain: graph, target parameters and its own generator."""

    graph: Graph
    params: TiltParams
    rng: np.random.Generator
    constraint: ConstraintSet | None = None
    step: int = 0
    rejected: int = 0
    _pairs: tuple = field(default=None, repr=False)
    _tpow: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.constraint is not None and not self.constraint.contains(self.graph):
            raise ValueError(f"initial graph {self.graph} violates constraint {self.constraint.describe()}")
        self._pairs = pair_arrays(self.graph.n)
        self._tpow = triangle_power_table(self.graph.n, self.params.alpha)


_EMPTY_I = np.zeros(0, dtype=np.int64)


def _advance(state: ChainState, steps: int, constrained: bool) -> ChainState:
    g = state.graph
    m = state._pairs[0].size
    picks = state.rng.integers(0, m, size=steps)
    uniforms = state.rng.random(steps)
    c = state.constraint if constrained else None
    box = np.array([g.E, g.T, state.step, state.rejected], dtype=np.int64)
    K.glauber_batch(
        g.rows, box, state._pairs[0], state._pairs[1], picks, uniforms,
        state.params.h, state.params.hamiltonian_coef(g.n), state._tpow,
        c is not None, 1.0 if c is None else c.epsilon_cap,
        0.0 if c is None else c.tau_lo, 1.0 if c is None else c.tau_hi,
        False, 0.0, 0.0, 0.0, 0.0, 0.0, K.new_accumulator(), np.zeros(1, dtype=np.int64),
        _EMPTY_I, _EMPTY_I,
    )
    g.E, g.T = int(box[0]), int(box[1])
    state.step, state.rejected = int(box[2]), int(box[3])
    return state


def glauber_step(state: ChainState, steps: int = 1) -> ChainState:
    """Resample one uniformly chosen pair from its conditional law (``steps`` times)."""
    return _advance(state, steps, constrained=False)


def conditioned_step(state: ChainState, steps: int = 1) -> ChainState:
    """Glauber step whose proposal is reverted whenever it leaves the constraint set."""
    if state.constraint is None:
        raise ValueError("conditioned_step needs a constraint")
    return _advance(state, steps, constrained=True)


def budget_steps(n: int, coeff: float = 5e4) -> int:
    """Step budget ``coeff * n^2 * log n``."""
    return int(round(coeff * n * n * math.log(n)))


def default_burnin(n: int, coeff: float = 10.0) -> int:
    return int(round(coeff * n * n * math.log(n)))


def replica_seeds(seed: int, replicas: int) -> list[np.random.SeedSequence]:
    """Independent child seeds: ``SeedSequence(seed).spawn(replicas)``."""
    return np.random.SeedSequence(seed).spawn(replicas)


def initial_density(params: TiltParams, constraint: ConstraintSet | None) -> float:
    """Edge density the tilt concentrates on: the maximiser of V, capped for restricted chains."""
    if constraint is None:
        return maximize_V(params).u_star
    cap = constraint.edge_cap_density
    return min(maximize_V(params, cap=cap).u_star, cap)


def initial_graph(n: int, params: TiltParams, rng: np.random.Generator,
                  constraint: ConstraintSet | None = None) -> Graph:
    """Bernoulli(u*) graph, retried until it satisfies ``constraint``."""
    from .graph import random_graph

    u = initial_density(params, constraint)
    for _ in range(INIT_RETRIES):
        g = random_graph(n, u, rng)
        if constraint is None or constraint.contains(g):
            return g
    raise RuntimeError(f"no Bernoulli({u:.4g}) start inside {constraint.describe()} after {INIT_RETRIES} draws")


@dataclass
class ChainRun:
    """Aggregated output of one or more replicas.

    ``acc`` has one row per (replica, batch) in replica-major order; see
    ``_kernels`` for the column layout. ``hist[E]`` counts post-burn-in
    observations inside the event with edge count E.
    """

    n: int
    params: TiltParams
    spec: ProblemSpec | None
    constraint: ConstraintSet | None
    ref_h: float
    seed: int
    total_steps: int
    burnin: int
    acc: np.ndarray
    hist: np.ndarray
    rejected: int
    seconds: float
    replicas: int = 1
    final_states: list[tuple[int, int]] = field(default_factory=list)

    @property
    def observations(self) -> int:
        return int(self.acc[:, K.ACC_K].sum())

    def merge(self, other: "ChainRun") -> "ChainRun":
        """Pool two runs of the same target; batch rows are concatenated in argument order."""
        if (self.n, self.params, self.spec, self.constraint, self.ref_h) != \
                (other.n, other.params, other.spec, other.constraint, other.ref_h):
            raise ValueError("can only merge runs of the same chain target and event")
        return ChainRun(
            n=self.n, params=self.params, spec=self.spec, constraint=self.constraint,
            ref_h=self.ref_h, seed=self.seed,
            total_steps=self.total_steps + other.total_steps,
            burnin=self.burnin + other.burnin,
            acc=np.vstack([self.acc, other.acc]),
            hist=self.hist + other.hist,
            rejected=self.rejected + other.rejected,
            seconds=self.seconds + other.seconds,
            replicas=self.replicas + other.replicas,
            final_states=self.final_states + other.final_states,
        )


def _batch_bounds(observed: int, batches: int) -> np.ndarray:
    return np.linspace(0, observed, batches + 1).round().astype(np.int64)


def run_chain(
    params: TiltParams,
    n: int,
    total_steps: int,
    burnin: int | None = None,
    seed: int = 0,
    spec: ProblemSpec | None = None,
    constraint: ConstraintSet | None = None,
    ref_h: float | None = None,
    replicas: int = 1,
    batches: int = DEFAULT_BATCHES,
    observer: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
    chunk: int = CHUNK,
) -> ChainRun:
    """Run ``replicas`` independent chains of ``total_steps`` steps each (burn-in included).

    Every post-burn-in state is folded into per-batch accumulators holding
    hit counts and two log-weight streams: the source weight ``dP/dQ`` (up to
    normalisation) and the weight of the Erdos-Renyi reference law with
    log-odds ``ref_h``. ``observer(replica, E, T)``, if given, receives the raw
    post-burn-in trajectory in chunks. Random numbers are drawn per chunk, so
    output is reproducible for a fixed ``(seed, chunk)``.
    """
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    if burnin is None:
        burnin = min(default_burnin(n), total_steps)
    if not (0 <= burnin <= total_steps):
        raise ValueError(f"need 0 <= burnin <= total_steps, got burnin={burnin}, total={total_steps}")
    if batches < 1 or replicas < 1:
        raise ValueError("batches and replicas must be positive")
    observed = total_steps - burnin
    batches = max(1, min(batches, observed)) if observed else 1

    pi, pj = pair_arrays(n)
    m = pi.size
    coef = params.hamiltonian_coef(n)
    tpow = triangle_power_table(n, params.alpha)
    if spec is not None:
        thr = float(spec.min_triangles(n))
        h_src = float(log_odds(spec.p))
    else:  # no event: statistics only
        thr = math.inf
        h_src = params.h
    if ref_h is None:
        ref_h = float(log_odds(initial_density(params, constraint)))
    aE, aT = h_src - params.h, -coef
    bE, bT = ref_h - params.h, -coef
    con = constraint is not None
    cap = constraint.epsilon_cap if con else 1.0
    lo = constraint.tau_lo if con else 0.0
    hi = constraint.tau_hi if con else 1.0

    acc = np.vstack([K.new_accumulator() for _ in range(replicas * batches)])
    hist = np.zeros(m + 1, dtype=np.int64)
    rejected = 0
    finals = []
    bounds = _batch_bounds(observed, batches)
    t0 = time.perf_counter()
    for r, ss in enumerate(replica_seeds(seed, replicas)):
        rng = np.random.default_rng(ss)
        g = initial_graph(n, params, rng, constraint)
        box = np.array([g.E, g.T, 0, 0], dtype=np.int64)
        done = 0
        while done < total_steps:
            size = min(chunk, total_steps - done)
            picks = rng.integers(0, m, size=size)
            uniforms = rng.random(size)
            # split the chunk at the burn-in point and at batch boundaries
            cuts = {0, size}
            if done < burnin < done + size:
                cuts.add(burnin - done)
            for b in bounds[1:-1] + burnin:
                if done < b < done + size:
                    cuts.add(int(b - done))
            cuts = sorted(cuts)
            for s0, s1 in zip(cuts[:-1], cuts[1:]):
                pos = done + s0
                observe = pos >= burnin
                if observe:
                    b = int(np.searchsorted(bounds, pos - burnin, side="right") - 1)
                    row = acc[r * batches + min(b, batches - 1)]
                else:
                    row = acc[r * batches]
                if observe and observer is not None:
                    tE = np.empty(s1 - s0, dtype=np.int64)
                    tT = np.empty(s1 - s0, dtype=np.int64)
                else:
                    tE = tT = _EMPTY_I
                K.glauber_batch(g.rows, box, pi, pj, picks[s0:s1], uniforms[s0:s1], params.h, coef, tpow,
                                con, cap, lo, hi, observe, thr, aE, aT, bE, bT, row, hist, tE, tT)
                if tE.size:
                    observer(r, tE, tT)
            done += size
        g.E, g.T = int(box[0]), int(box[1])
        rejected += int(box[3])
        finals.append((g.E, g.T))
    return ChainRun(
        n=n, params=params, spec=spec, constraint=constraint, ref_h=float(ref_h), seed=seed,
        total_steps=total_steps * replicas, burnin=burnin * replicas, acc=acc, hist=hist,
        rejected=rejected, seconds=time.perf_counter() - t0, replicas=replicas, final_states=finals,
    )
