import math

import numpy as np
import pytest

from tritail.estimator import psi_er_exact
from tritail.glauber import ConstraintSet
from tritail.oracle import (
    JointDistribution, edge_count_law_given_event, enumerate_joint, exact_estimator_moments, exact_glauber_matrix,
    exact_mu, exact_mu_direct, exact_psi, exact_tail,
)
from tritail.rates import ProblemSpec, TiltParams, log_odds, logistic, maximize_V

SPEC = ProblemSpec(0.35, 0.4)


def test_n3_counts():
    assert enumerate_joint(3).as_dict() == {(0, 0): 1, (1, 0): 3, (2, 0): 3, (3, 1): 1}


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6, 7])
def test_cardinality_and_corners(n):
    joint = enumerate_joint(n)
    assert joint.total == 2 ** math.comb(n, 2)
    assert joint.counts[0, 0] == 1
    assert joint.counts[math.comb(n, 2), math.comb(n, 3)] == 1


def test_n4_examples():
    joint = enumerate_joint(4)
    assert joint.total == 64
    assert joint.counts[6, 4] == 1


def test_range_errors():
    for n in (1, 8, 9):
        with pytest.raises(ValueError):
            enumerate_joint(n)


def test_exact_mu_examples():
    assert exact_mu(3, SPEC) == pytest.approx(0.35 ** 3, abs=1e-15)
    with_tri = sum(c for (e, t), c in enumerate_joint(4).as_dict().items() if t >= 1)
    # p = t = 1/2: threshold C(4,3) / 8 = 0.5, so T >= 1
    assert exact_tail(4, 0.5, math.ceil(4 * 0.5 ** 3)) == pytest.approx(with_tri / 64, abs=1e-15)
    # tiny t: the threshold rounds up to one triangle
    assert exact_mu(5, ProblemSpec(0.3, 0.3 + 1e-9)) == pytest.approx(exact_mu(5, ProblemSpec(0.3, 0.31)))
    tiny = ProblemSpec(1e-4, 2e-4)
    assert tiny.min_triangles(5) == 1


@pytest.mark.parametrize("n", [3, 4, 5])
@pytest.mark.parametrize("pt", [(0.35, 0.4), (0.2, 0.3), (0.5, 0.7)])
def test_mu_direct_agreement(n, pt):
    spec = ProblemSpec(*pt)
    assert exact_mu(n, spec) == pytest.approx(exact_mu_direct(n, spec), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("n", [3, 5, 7])
def test_psi_closed_form(n):
    for p in (0.2, 0.35, 0.7):
        assert exact_psi(n, TiltParams.source(p)) == pytest.approx(psi_er_exact(n, p), abs=1e-12)


def test_psi_continuity_and_trend():
    h = float(log_odds(0.35))
    assert abs(exact_psi(6, TiltParams(h, 1e-9)) - exact_psi(6, TiltParams(h, 0.0))) <= 1e-8
    params = TiltParams(h, 2.0, 1.0)
    limit = maximize_V(params).value
    gaps = [abs(exact_psi(n, params) - limit) for n in (4, 5, 6, 7)]
    assert gaps == sorted(gaps, reverse=True)


@pytest.mark.parametrize("tilt", [TiltParams.edge(0.4), TiltParams.triangle(SPEC, 1.0), TiltParams.hybrid(0.37, 0.4),
                                  TiltParams.triangle(SPEC, 2 / 3)])
def test_moments_unbiased(tilt):
    for n in (4, 5, 6):
        assert exact_estimator_moments(n, SPEC, tilt).mean == pytest.approx(exact_mu(n, SPEC), rel=1e-12)


def test_source_tilt_second_moment_is_mu():
    m = exact_estimator_moments(6, SPEC, TiltParams.source(0.35))
    assert m.second == pytest.approx(exact_mu(6, SPEC), rel=1e-12)
    assert m.variance == pytest.approx(m.mean * (1 - m.mean), rel=1e-10)


def test_variance_ordering_n6():
    edge = exact_estimator_moments(6, SPEC, TiltParams.edge(0.4)).variance
    tri23 = exact_estimator_moments(6, SPEC, TiltParams.triangle(SPEC, 2 / 3)).variance
    tri1 = exact_estimator_moments(6, SPEC, TiltParams.triangle(SPEC, 1.0)).variance
    assert tri23 < edge
    # at this small n the alpha = 1 tilt is still slightly worse than the edge tilt
    assert tri1 == pytest.approx(0.10664, abs=1e-5)
    assert edge == pytest.approx(0.101864, abs=1e-5)
    s2 = ProblemSpec(0.2, 0.3)
    for n in (5, 6, 7):
        assert (exact_estimator_moments(n, s2, TiltParams.triangle(s2, 2 / 3)).variance
                < exact_estimator_moments(n, s2, TiltParams.edge(0.3)).variance)


def test_conditioned_moments():
    cap = ConstraintSet.cap(0.8)
    tilt = TiltParams.triangle(SPEC, 1.0)
    for n in (4, 5, 6):
        m = exact_estimator_moments(n, SPEC, tilt, cap)
        assert m.mean == pytest.approx(exact_mu(n, SPEC, cap), rel=1e-12)


def test_edge_law_given_event():
    law = edge_count_law_given_event(5, SPEC)
    assert law.sum() == pytest.approx(1.0)
    assert law[:3].sum() == 0.0  # a triangle needs three edges


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "joint.csv"
    joint = enumerate_joint(5)
    joint.to_csv(path)
    back = JointDistribution.from_csv(path)
    assert back.n == 5
    assert np.array_equal(back.counts, joint.counts)


def test_edge_marginal_symmetric_at_half():
    joint = enumerate_joint(6)
    marg = joint.counts.sum(axis=1)
    assert np.array_equal(marg, marg[::-1])
    assert np.array_equal(marg, [math.comb(15, e) for e in range(16)])


def test_glauber_matrix_beta_zero_is_bernoulli():
    chk = exact_glauber_matrix(4, TiltParams(-0.7))
    q = float(logistic(-0.7))
    bern = np.array([q ** g.E * (1 - q) ** (6 - g.E) for g in chk.states])
    assert np.allclose(chk.pi, bern, atol=1e-15)
    assert chk.stationarity_residual <= 1e-12


@pytest.mark.parametrize("params", [TiltParams(-1.0, 1.0, 1.0), TiltParams(-1.0, 1.0, 0.5),
                                    TiltParams(float(log_odds(0.2)), 5.99, 1.0)])
@pytest.mark.parametrize("r", [None, 0.8, 0.6])
def test_glauber_matrix_balance(params, r):
    con = None if r is None else ConstraintSet.cap(r)
    chk = exact_glauber_matrix(4, params, con)
    assert chk.detailed_balance_residual <= 1e-12
    assert chk.stationarity_residual <= 1e-12
    assert np.allclose(chk.P.sum(axis=1), 1.0, atol=1e-14)
    if con is not None:
        assert all(con.contains(g) for g in chk.states)
        joint = enumerate_joint(4)
        # restricted Gibbs law from the histogram agrees with the matrix stationary law
        lp = dict(zip(zip(*joint.cells()[:2]), joint.log_cell_probs(params, con)))
        for g, w in zip(chk.states, chk.pi):
            assert w == pytest.approx(math.exp(lp[(g.E, g.T)]), rel=1e-10)


def test_glauber_matrix_limit():
    with pytest.raises(ValueError):
        exact_glauber_matrix(5, TiltParams(0.0))
