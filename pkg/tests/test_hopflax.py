import numpy as np
import pytest

from otflow.errors import NonPositiveTime
from otflow.fields import ScalarField
from otflow.hopflax import check_dpm_monotone, hj_residuals, hopf_lax
from otflow.mmspace import gen_circle_grid, make_space
from otflow.rng import SplitMix64

from oracles import brute_hopf_lax, random_euclidean_space


@pytest.fixture
def two_point():
    return make_space([[0, 1], [1, 0]], [0.5, 0.5])


def test_two_point_small_time(two_point):
    # oracle: q(b) = min(f(b), f(a) + 1/(2t)) = min(1, 2) = 1 at t = 0.25
    f = ScalarField(two_point, [0, 1])
    res = hopf_lax(f, 0.25)
    assert np.array_equal(res.q.values, [0.0, 1.0])
    assert np.array_equal(res.d_plus, [0.0, 0.0])
    assert np.array_equal(res.d_minus, [0.0, 0.0])


def test_two_point_large_time(two_point):
    # q(b) = min(1, 0 + 1/2) = 1/2 attained at a, so D(b) = 1
    f = ScalarField(two_point, [0, 1])
    res = hopf_lax(f, 1.0)
    assert np.array_equal(res.q.values, [0.0, 0.5])
    assert res.d_plus[1] == 1.0
    assert res.d_minus[1] == 1.0


def test_constant_field_fixed_point():
    s = gen_circle_grid(9)
    f = ScalarField(s, np.full(9, 2.5))
    res = hopf_lax(f, 0.7)
    assert np.array_equal(res.q.values, f.values)
    assert np.all(res.d_plus == 0.0)
    assert np.all(res.d_minus == 0.0)


def test_nonpositive_time_rejected(two_point):
    f = ScalarField(two_point, [0, 1])
    with pytest.raises(NonPositiveTime):
        hopf_lax(f, 0.0)


def test_matches_bruteforce_oracle():
    rng = SplitMix64(11)
    for _ in range(5):
        s = random_euclidean_space(rng, 9)
        f = np.array([rng.uniform() for _ in range(9)])
        res = hopf_lax(ScalarField(s, f), 0.3)
        q, dmin, dmax = brute_hopf_lax(s, f, 0.3)
        assert np.allclose(res.q.values, q, atol=0)
        assert np.allclose(res.d_minus, dmin, atol=0)
        assert np.allclose(res.d_plus, dmax, atol=0)


def test_basic_pointwise_bounds():
    rng = SplitMix64(12)
    s = random_euclidean_space(rng, 12)
    f = ScalarField(s, np.array([rng.uniform() for _ in range(12)]))
    res = hopf_lax(f, 0.2)
    assert np.all(res.q.values <= f.values + 1e-15)   # choose y = x
    assert np.all(res.d_minus <= res.d_plus + 1e-15)


def test_q_nonincreasing_in_time():
    rng = SplitMix64(13)
    s = random_euclidean_space(rng, 10)
    f = ScalarField(s, np.array([rng.uniform() for _ in range(10)]))
    prev = hopf_lax(f, 0.05).q.values
    for t in (0.1, 0.2, 0.5, 1.0):
        cur = hopf_lax(f, t).q.values
        assert np.all(cur <= prev + 1e-12)
        prev = cur


def test_lipschitz_bound_on_dplus():
    rng = SplitMix64(14)
    for _ in range(3):
        s = random_euclidean_space(rng, 10)
        f = ScalarField(s, np.array([rng.uniform() for _ in range(10)]))
        lip = f.lipschitz()
        for t in (0.1, 0.5):
            res = hopf_lax(f, t)
            assert np.all(res.d_plus <= 2 * t * lip + 1e-12)


def test_local_lipschitz_constant_bound():
    # slope of Q_t f at x is at most D+(x,t)/t + 4 h Lip(f)/t on circle grids
    from otflow.calculus import slope

    for n in (16, 32, 64):
        s = gen_circle_grid(n)
        for vals in (s.dist[0], np.cos(2 * np.pi * np.arange(n) / n)):
            f = ScalarField(s, vals)
            lip = f.lipschitz()
            for t in (0.05, 0.2):
                res = hopf_lax(f, t)
                sl = slope(res.q, s.mesh, "two_sided").values
                bound = res.d_plus / t + 4 * s.mesh * lip / t
                assert np.all(sl <= bound + 1e-12)


def test_semigroup_inequality():
    s = gen_circle_grid(32)
    f = ScalarField(s, s.dist[0])
    t, u = 0.07, 0.11
    lhs = hopf_lax(f, t + u).q.values
    rhs = hopf_lax(hopf_lax(f, u).q, t).q.values
    assert np.all(lhs <= rhs + 1e-12)
    # equality within O(h) on the geodesic circle
    assert np.max(rhs - lhs) <= 4 * s.mesh


def test_dpm_monotone_circle_ramp():
    s = gen_circle_grid(16)
    ramp = ScalarField(s, np.minimum(np.arange(16), 16 - np.arange(16)) / 8.0)
    rep = check_dpm_monotone(ramp, [0.1, 0.2, 0.4])
    assert rep.passed
    assert rep.residuals["max_violation"] == 0.0


def test_dpm_monotone_two_point(two_point):
    f = ScalarField(two_point, [0, 1])
    r1 = hopf_lax(f, 0.25)
    r2 = hopf_lax(f, 1.0)
    assert r1.d_plus[1] == 0.0
    assert r2.d_minus[1] == 1.0
    rep = check_dpm_monotone(f, [0.25, 1.0])
    assert rep.passed


def test_dpm_monotone_constant():
    s = gen_circle_grid(8)
    rep = check_dpm_monotone(ScalarField(s, np.zeros(8)), [0.1, 0.3, 0.9])
    assert rep.passed
    assert rep.residuals["max_violation"] == 0.0


def test_hj_residuals_constant_field():
    s = gen_circle_grid(16)
    rep = hj_residuals(ScalarField(s, np.full(16, 1.5)), 0.2)
    assert rep.residuals["max_subsolution"] == 0.0
    assert rep.residuals["max_supersolution"] == 0.0
    assert rep.residuals["max_dini"] == 0.0


def test_hj_two_point_time_derivative(two_point):
    # q(b, t) = 1/(2t) for t >= 1/2, so dq/dt = -1/(2 t^2) = -0.5 at t = 1
    f = ScalarField(two_point, [0, 1])
    rep = hj_residuals(f, 1.0, dt=1e-4)
    dq = rep.per_point["dq_dt"][1]
    assert dq == pytest.approx(-0.5, abs=1e-6)
    assert rep.residuals["max_dini"] <= 1e-6


def test_hj_supersolution_first_order_on_circle():
    values = {}
    for n in (32, 64, 128):
        s = gen_circle_grid(n)
        rep = hj_residuals(ScalarField(s, s.dist[0]), 0.1, dt=1e-3)
        values[n] = rep.residuals["max_supersolution"]
    assert values[64] < values[32]
    assert values[128] < values[64]
    assert values[128] <= 0.1
