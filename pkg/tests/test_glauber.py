import math
import warnings

import numpy as np
import pytest

from tritail import _kernels as K
from tritail.glauber import (
    ChainState, ConstraintSet, acceptance_prob, budget_steps, conditioned_step, glauber_step, initial_graph,
    run_chain,
)
from tritail.graph import Graph, random_graph
from tritail.oracle import exact_mu
from tritail.rates import ProblemSpec, TiltParams, log_odds, logistic

SPEC = ProblemSpec(0.35, 0.4)
HP02 = float(log_odds(0.2))


def hamiltonian(g: Graph, params: TiltParams) -> float:
    """``n^2 H`` by full recount."""
    E, T = g.recount()
    return params.h * E + params.hamiltonian_coef(g.n) * float(T) ** params.alpha


def batch_mean(run, col, scale):
    a = run.acc
    k = a[:, K.ACC_K]
    means = a[:, col] / k * scale
    return float(a[:, col].sum() / k.sum() * scale), float(means.std(ddof=1) / math.sqrt(len(means)))


def test_acceptance_beta_zero():
    g = random_graph(10, 0.5, np.random.default_rng(0))
    for h in (-1.0, HP02):
        assert acceptance_prob(g, 2, 5, TiltParams(h)) == pytest.approx(float(logistic(h)), abs=1e-15)
    assert acceptance_prob(g, 0, 1, TiltParams.source(0.2)) == pytest.approx(0.2, abs=1e-15)


def test_acceptance_alpha_one_neat_form():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(4, 30))
        g = random_graph(n, float(rng.random()), rng)
        params = TiltParams(float(rng.normal()), float(rng.uniform(0, 8)), 1.0)
        i, j = (int(v) for v in rng.choice(n, 2, replace=False))
        L = g.common_neighbors(i, j)
        neat = float(logistic(params.h + params.beta * L / n))
        assert acceptance_prob(g, i, j, params) == pytest.approx(neat, abs=1e-14)


def test_acceptance_alpha_half_bruteforce():
    rng = np.random.default_rng(2)
    for _ in range(50):
        g = random_graph(10, float(rng.random()), rng)
        params = TiltParams(float(rng.normal()), float(rng.uniform(0, 5)), 0.5)
        i, j = (int(v) for v in rng.choice(10, 2, replace=False))
        on, off = g.copy(), g.copy()
        if on.has_edge(i, j):
            off.flip(i, j)
        else:
            on.flip(i, j)
        brute = float(logistic(hamiltonian(on, params) - hamiltonian(off, params)))
        assert acceptance_prob(g, i, j, params) == pytest.approx(brute, abs=1e-12)


def test_er_density():
    n = 20
    run = run_chain(TiltParams.source(0.3), n, 400_000, 20_000, seed=3)
    mean, se = batch_mean(run, K.ACC_SUM_E, 1 / math.comb(n, 2))
    assert abs(mean - 0.3) <= 3 * se


def test_step_updates_caches():
    state = ChainState(random_graph(12, 0.4, np.random.default_rng(4)), TiltParams(-0.5, 2.0, 0.7),
                       np.random.default_rng(5))
    glauber_step(state, 5000)
    assert state.step == 5000
    assert (state.graph.E, state.graph.T) == state.graph.recount()


def test_vacuous_cap_same_trajectory():
    params = TiltParams.triangle(SPEC, 1.0)
    g = random_graph(16, 0.4, np.random.default_rng(6))
    a = ChainState(g.copy(), params, np.random.default_rng(7))
    b = ChainState(g.copy(), params, np.random.default_rng(7), constraint=ConstraintSet.cap(1.0))
    for _ in range(20):
        glauber_step(a, 1000)
        conditioned_step(b, 1000)
        assert a.graph == b.graph
    assert b.rejected == 0


def test_vacuous_cap_same_run():
    params = TiltParams.hybrid(0.37, 0.4)
    a = run_chain(params, 12, 200_000, seed=8, spec=SPEC)
    b = run_chain(params, 12, 200_000, seed=8, spec=SPEC, constraint=ConstraintSet.cap(1.0),
                  ref_h=a.ref_h)
    assert np.array_equal(a.acc, b.acc)
    assert a.final_states == b.final_states


def test_constraint_support():
    r = 0.4272
    cap = ConstraintSet.cap(r)
    n = 24
    seen = []
    run = run_chain(TiltParams(HP02, 5.99, 1.0), n, 1_000_000, 0, seed=9, constraint=cap,
                    observer=lambda rep, E, T: seen.append((E.max(), T.max())))
    assert run.rejected > 0
    maxE = max(e for e, _ in seen)
    maxT = max(t for _, t in seen)
    assert 2 * maxE / n ** 2 <= r
    assert 6 * maxT / n ** 3 <= r ** 3
    assert run.acc[:, K.ACC_MAX_E].max() == maxE


def test_conditioned_step_requires_start_inside():
    g = Graph.from_edges(4, [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)])
    with pytest.raises(ValueError):
        ChainState(g, TiltParams(0.0), np.random.default_rng(0), constraint=ConstraintSet.cap(0.5))
    with pytest.raises(ValueError):
        conditioned_step(ChainState(g, TiltParams(0.0), np.random.default_rng(0)))


def test_interior_interval_warns():
    with pytest.warns(UserWarning):
        ConstraintSet(0.1, 0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ConstraintSet(0.0, 0.5)
        ConstraintSet(0.5, 1.0)


def test_initial_graph_inside_constraint():
    cap = ConstraintSet.cap(0.4272)
    rng = np.random.default_rng(10)
    for _ in range(5):
        assert cap.contains(initial_graph(32, TiltParams(HP02, 5.99, 1.0), rng, cap))


def test_determinism():
    params = TiltParams.triangle(SPEC, 1.0)
    a = run_chain(params, 16, 300_000, seed=11, spec=SPEC, replicas=2)
    b = run_chain(params, 16, 300_000, seed=11, spec=SPEC, replicas=2)
    c = run_chain(params, 16, 300_000, seed=12, spec=SPEC, replicas=2)
    assert np.array_equal(a.acc, b.acc) and np.array_equal(a.hist, b.hist)
    assert not np.array_equal(a.acc, c.acc)


def test_budget_helper():
    assert budget_steps(16) == round(5e4 * 256 * math.log(16))
    assert budget_steps(16) == pytest.approx(3.55e7, rel=1e-3)


def test_observer_mean_matches_exact_mu():
    n = 6
    spec = ProblemSpec(0.35, 0.4)
    thr = spec.min_triangles(n)
    sums = []
    run_chain(TiltParams.source(0.35), n, 2_000_000, 10_000, seed=14, spec=spec,
              observer=lambda rep, E, T: sums.append(np.asarray(T >= thr, dtype=float)))
    hits = np.concatenate(sums)
    batches = hits.reshape(40, -1).mean(axis=1)
    mean, se = hits.mean(), batches.std(ddof=1) / math.sqrt(40)
    assert abs(mean - exact_mu(n, spec)) <= 3 * se


def test_run_chain_argument_errors():
    with pytest.raises(ValueError):
        run_chain(TiltParams(0.0), 10, 100, burnin=200)
    with pytest.raises(ValueError):
        run_chain(TiltParams(0.0), 2, 100)


def test_merge_is_concatenation():
    params = TiltParams.edge(0.4)
    a = run_chain(params, 10, 50_000, seed=15, spec=SPEC)
    b = run_chain(params, 10, 50_000, seed=16, spec=SPEC)
    m = a.merge(b)
    assert np.array_equal(m.acc, np.vstack([a.acc, b.acc]))
    assert m.observations == a.observations + b.observations
    with pytest.raises(ValueError):
        a.merge(run_chain(TiltParams.edge(0.38), 10, 50_000, seed=15, spec=SPEC))


# ergodic means for the (0.35, 0.4) tilts at n = 32 with the full budget

@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="the Gibbs mean of eps differs from t by O(1/n), far more than 5 SE at n=32")
def test_ergodic_means_triangle_family_within_5se():
    n = 32
    run = run_chain(TiltParams.hybrid(0.35, 0.4), n, budget_steps(n), seed=2, spec=SPEC)
    eps, se_e = batch_mean(run, K.ACC_SUM_E, 2 / n ** 2)
    tau, se_t = batch_mean(run, K.ACC_SUM_T, 6 / n ** 3)
    assert abs(eps - 0.4) <= 5 * se_e and abs(tau - 0.064) <= 5 * se_t


@pytest.mark.slow
def test_ergodic_means_edge_tilt_within_5se():
    n = 32
    run = run_chain(TiltParams.edge(0.4), n, budget_steps(n), seed=2, spec=SPEC)
    e, se_e = batch_mean(run, K.ACC_SUM_E, 1 / math.comb(n, 2))
    t, se_t = batch_mean(run, K.ACC_SUM_T, 1 / math.comb(n, 3))
    assert abs(e - 0.4) <= 5 * se_e
    assert abs(t - 0.064) <= 5 * se_t


@pytest.mark.slow
def test_ergodic_bias_shrinks_like_one_over_n():
    scaled = []
    for n, frac in ((16, 0.5), (32, 0.3)):
        run = run_chain(TiltParams.hybrid(0.35, 0.4), n, int(frac * budget_steps(n)), seed=2, spec=SPEC)
        e, _ = batch_mean(run, K.ACC_SUM_E, 1 / math.comb(n, 2))
        scaled.append(n * (e - 0.4))
    # n * bias is roughly constant, so the bias itself halves from n=16 to n=32
    assert all(-0.2 < s < -0.05 for s in scaled)
    assert abs(scaled[0] - scaled[1]) < 0.03
