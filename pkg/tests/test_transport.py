import math

import numpy as np
import pytest

from otflow.errors import (
    AbsoluteContinuityViolation,
    NoConvergence,
    NoGeodesicStructure,
    SolverFailure,
)
from otflow.fields import DensityField, ScalarField, preset_field
from otflow.mmspace import gen_circle_grid, make_space
from otflow.rng import SplitMix64
from otflow.transport import (
    CurvePlan,
    c_transform,
    entropy,
    geodesic_plan,
    kantorovich_potential,
    load_curve_plan,
    load_plan,
    push_forward_plan,
    relative_entropy,
    save_curve_plan,
    save_plan,
    superpose,
    w2_cost,
    w2_entropic,
    w2_exact,
)

from oracles import (
    circle_quantile_cost,
    enumerate_transport_cost,
    line_quantile_cost,
    lp_transport_cost,
    random_density_values,
    random_euclidean_space,
)


@pytest.fixture
def two_point():
    return make_space([[0, 1], [1, 0]], [0.5, 0.5])


def deltas(space, i):
    vals = np.zeros(space.n)
    vals[i] = 1.0 / space.measure[i]
    return DensityField(space, vals)


# -- exact solver ----------------------------------------------------------


def test_delta_to_delta(two_point):
    plan = w2_exact(deltas(two_point, 0), deltas(two_point, 1))
    assert plan.cost == 1.0
    assert plan.is_optimal
    assert plan.gamma[0, 1] == 1.0


def test_identity_coupling(two_point):
    s = gen_circle_grid(8)
    mu = preset_field("bump", {"center": 0.3, "width": 0.2}, s, density=True)
    plan = w2_exact(mu, mu)
    assert plan.cost == 0.0
    assert np.allclose(np.diag(plan.gamma), mu.masses(), atol=1e-15)
    off = plan.gamma - np.diag(np.diag(plan.gamma))
    assert np.all(off == 0.0)


def test_two_point_skewed_pair_vs_enumeration(two_point):
    # oracle: one-parameter coupling family gamma_00 = p, cost = 1 - 2p
    # minimized at the largest feasible p = 0.25, so cost = 0.5.  (The
    # paraphrased value 0.25 in informal descriptions double-counts the
    # density-to-mass conversion.)
    mu = DensityField(two_point, [1.5, 0.5])
    nu = DensityField(two_point, [0.5, 1.5])
    a, b = mu.masses(), nu.masses()
    oracle = enumerate_transport_cost(two_point.dist_sq, a, b)
    assert oracle == pytest.approx(0.5, abs=1e-12)
    assert w2_exact(mu, nu).cost == pytest.approx(oracle, abs=1e-12)


def test_matches_enumeration_on_tiny_spaces():
    rng = SplitMix64(21)
    for _ in range(5):
        s = random_euclidean_space(rng, 3)
        mu = random_density_values(rng, s)
        nu = random_density_values(rng, s)
        plan = w2_exact(mu, nu)
        oracle = enumerate_transport_cost(s.dist_sq, mu.masses(), nu.masses())
        assert plan.cost == pytest.approx(oracle, abs=1e-10)


def test_matches_scipy_on_random_spaces():
    rng = SplitMix64(22)
    for _ in range(6):
        n = 4 + rng.randint(0, 4)
        s = random_euclidean_space(rng, n)
        mu = random_density_values(rng, s)
        nu = random_density_values(rng, s)
        plan = w2_exact(mu, nu)
        assert plan.cost == pytest.approx(lp_transport_cost(s, mu, nu), abs=1e-9)


def test_dual_certificate():
    rng = SplitMix64(23)
    for _ in range(4):
        s = random_euclidean_space(rng, 7)
        mu = random_density_values(rng, s)
        nu = random_density_values(rng, s)
        plan = w2_exact(mu, nu)
        red = s.dist_sq - plan.dual_u[:, None] - plan.dual_v[None, :]
        assert red.min() >= -1e-10
        gap = plan.cost - (plan.dual_u @ mu.masses() + plan.dual_v @ nu.masses())
        assert abs(gap) <= 1e-8


def test_deterministic_plan():
    rng = SplitMix64(24)
    s = random_euclidean_space(rng, 9)
    mu = random_density_values(rng, s)
    nu = random_density_values(rng, s)
    p1 = w2_exact(mu, nu)
    p2 = w2_exact(mu, nu)
    assert np.array_equal(p1.gamma, p2.gamma)
    assert p1.cost == p2.cost


def test_one_dimensional_quantile_oracle_line():
    rng = SplitMix64(25)
    pos = np.sort(np.array([rng.uniform() for _ in range(24)]))
    dist = np.abs(pos[:, None] - pos[None, :])
    w = np.array([rng.uniform() + 0.1 for _ in range(24)])
    w /= w.sum()
    w[-1] += 1 - w.sum()
    s = make_space(dist, w)
    mu = random_density_values(rng, s)
    nu = random_density_values(rng, s)
    oracle = line_quantile_cost(pos, mu.masses(), nu.masses())
    assert w2_exact(mu, nu).cost == pytest.approx(oracle, abs=1e-8)


def test_one_dimensional_quantile_oracle_circle():
    rng = SplitMix64(26)
    for n in (16, 48):
        s = gen_circle_grid(n)
        pos = np.arange(n) / n
        mu = random_density_values(rng, s)
        nu = random_density_values(rng, s)
        oracle = circle_quantile_cost(pos, mu.masses(), nu.masses())
        assert w2_exact(mu, nu).cost == pytest.approx(oracle, abs=1e-8)


def test_w2_metric_axioms():
    rng = SplitMix64(27)
    s = random_euclidean_space(rng, 8)
    mus = [random_density_values(rng, s) for _ in range(3)]
    d01 = math.sqrt(w2_cost(mus[0], mus[1]))
    d10 = math.sqrt(w2_cost(mus[1], mus[0]))
    assert d01 == pytest.approx(d10, abs=1e-12)
    d02 = math.sqrt(w2_cost(mus[0], mus[2]))
    d12 = math.sqrt(w2_cost(mus[1], mus[2]))
    assert d02 <= d01 + d12 + 1e-8
    assert w2_cost(mus[0], mus[0]) <= 1e-15


def test_w2_squared_convexity():
    rng = SplitMix64(28)
    s = random_euclidean_space(rng, 8)
    mu1, nu1 = random_density_values(rng, s), random_density_values(rng, s)
    mu2, nu2 = random_density_values(rng, s), random_density_values(rng, s)
    c1, c2 = w2_cost(mu1, nu1), w2_cost(mu2, nu2)
    for lam in (0.25, 0.5, 0.75):
        mix_mu = DensityField(s, (1 - lam) * mu1.values + lam * mu2.values)
        mix_nu = DensityField(s, (1 - lam) * nu1.values + lam * nu2.values)
        assert w2_cost(mix_mu, mix_nu) <= (1 - lam) * c1 + lam * c2 + 1e-8


# -- entropic solver ---------------------------------------------------------


def test_entropic_delta_pair(two_point):
    plan = w2_entropic(deltas(two_point, 0), deltas(two_point, 1), epsilon=1e-3)
    assert plan.cost == pytest.approx(1.0, abs=1e-2)
    assert not plan.is_optimal


def test_entropic_bias_bound():
    # the entropic plan's extra cost stays below the 2 eps log n entropy
    # budget; eps is floored at max(d^2)/40 so the Gibbs kernel never
    # underflows on clustered random spaces
    from otflow.transport import default_epsilon

    rng = SplitMix64(29)
    for _ in range(3):
        s = random_euclidean_space(rng, 8)
        mu = random_density_values(rng, s)
        floor = float(s.dist_sq.max()) / 40.0
        for scale in (1.0, 2.0):
            eps = max(scale * default_epsilon(s), floor)
            plan = w2_entropic(mu, mu, epsilon=eps, tol=1e-9)
            exact = w2_cost(mu, mu)
            assert plan.cost <= exact + 2 * eps * math.log(8)


def test_entropic_marginals_within_tol():
    rng = SplitMix64(30)
    s = random_euclidean_space(rng, 8)
    mu = random_density_values(rng, s)
    nu = random_density_values(rng, s)
    plan = w2_entropic(mu, nu, epsilon=5e-3, tol=1e-9)
    assert plan.marginal_error() <= 1e-8


def test_entropic_rejects_zero_epsilon(two_point):
    mu = deltas(two_point, 0)
    with pytest.raises(SolverFailure):
        w2_entropic(mu, mu, epsilon=0.0)


def test_entropic_no_convergence_carries_error():
    rng = SplitMix64(31)
    s = random_euclidean_space(rng, 8)
    mu = random_density_values(rng, s)
    nu = random_density_values(rng, s)
    with pytest.raises(NoConvergence) as info:
        w2_entropic(mu, nu, epsilon=1e-4, max_iter=2, tol=1e-12)
    assert info.value.marginal_error > 0


# -- c-transform ----------------------------------------------------------------


def test_ctransform_zero():
    s = gen_circle_grid(8)
    psi = ScalarField(s, np.zeros(8))
    assert np.array_equal(c_transform(psi).values, np.zeros(8))


def test_ctransform_two_point(two_point):
    psi = ScalarField(two_point, [0.0, -1.0])
    assert np.array_equal(c_transform(psi).values, [0.0, 0.5])


def test_ctransform_involution_random_fields():
    rng = SplitMix64(32)
    s = random_euclidean_space(rng, 12)
    for _ in range(25):
        psi = ScalarField(s, np.array([rng.uniform() * 2 - 1 for _ in range(12)]))
        pc = c_transform(psi)
        pccc = c_transform(c_transform(pc))
        assert np.max(np.abs(pccc.values - pc.values)) <= 1e-12


# -- potentials -------------------------------------------------------------------


def test_potential_identity_gap_zero():
    s = gen_circle_grid(16)
    mu = preset_field("bump", {"center": 0.5, "width": 0.2}, s, density=True)
    pot = kantorovich_potential(mu, mu)
    assert abs(pot.gap) <= 1e-10


def test_potential_two_point_delta(two_point):
    pot = kantorovich_potential(deltas(two_point, 0), deltas(two_point, 1))
    assert pot.psi.values[0] + pot.psi_c.values[1] == pytest.approx(0.5, abs=1e-12)


def test_potential_circle_gap_and_support():
    s = gen_circle_grid(32)
    mu = preset_field("constant", {}, s, density=True)
    nu = preset_field("bump", {"center": 0.6, "width": 0.15}, s, density=True)
    plan = w2_exact(mu, nu)
    pot = kantorovich_potential(mu, nu, plan=plan)
    assert abs(pot.gap) <= 1e-8
    # support of the optimal plan lies in the c-superdifferential
    for i, j in plan.support():
        val = pot.psi.values[i] + pot.psi_c.values[j]
        assert val >= s.dist_sq[i, j] / 2 - 1e-8
    # c-concavity is exact after the double-transform projection
    again = c_transform(pot.psi_c)
    assert np.max(np.abs(again.values - pot.psi.values)) <= 1e-12


# -- entropy ----------------------------------------------------------------------


def test_entropy_conventions(two_point):
    s = gen_circle_grid(4)
    uniform = preset_field("constant", {}, s, density=True)
    assert entropy(uniform) == 0.0
    dirac = preset_field("dirac_like", {"at": 1}, s, density=True)
    assert entropy(dirac) == pytest.approx(math.log(4), abs=1e-12)
    assert relative_entropy(dirac, uniform) == pytest.approx(math.log(4), abs=1e-12)
    other = preset_field("dirac_like", {"at": 2}, s, density=True)
    assert relative_entropy(dirac, other) == math.inf
    assert relative_entropy(dirac, dirac) == 0.0


# -- pushforward ------------------------------------------------------------------


def test_pushforward_identity_plan():
    s = gen_circle_grid(6)
    uniform = preset_field("constant", {}, s, density=True)
    ident = w2_exact(uniform, uniform)
    mu = preset_field("bump", {"center": 0.2, "width": 0.2}, s, density=True)
    _, pushed = push_forward_plan(ident, mu)
    assert np.allclose(pushed.values, mu.values, atol=1e-12)


def test_pushforward_swap_two_point(two_point):
    uniform = DensityField(two_point, [1.0, 1.0])
    swap_gamma = np.array([[0.0, 0.5], [0.5, 0.0]])
    from otflow.transport import TransportPlan

    swap = TransportPlan(two_point, swap_gamma, uniform, uniform)
    mu = deltas(two_point, 0)
    _, pushed = push_forward_plan(swap, mu)
    assert np.array_equal(pushed.values, deltas(two_point, 1).values)


def test_pushforward_absolute_continuity_violation(two_point):
    from otflow.transport import TransportPlan

    uniform = DensityField(two_point, [1.0, 1.0])
    gamma = np.array([[0.0, 0.0], [0.5, 0.5]])  # first marginal misses point 0
    mu_first = DensityField(two_point, [0.0, 2.0])
    plan = TransportPlan(two_point, gamma, mu_first, uniform)
    mu = deltas(two_point, 0)
    with pytest.raises(AbsoluteContinuityViolation) as info:
        push_forward_plan(plan, mu)
    assert info.value.index == 0


def test_entropy_contraction_under_pushforward():
    rng = SplitMix64(33)
    s = random_euclidean_space(rng, 6)
    for _ in range(10):
        mu = random_density_values(rng, s)
        nu = random_density_values(rng, s)
        raw = np.array([[rng.uniform() + 0.05 for _ in range(6)] for _ in range(6)])
        gamma = raw / raw.sum()
        first = DensityField(s, gamma.sum(axis=1) / s.measure)
        second = DensityField(s, gamma.sum(axis=0) / s.measure)
        from otflow.transport import TransportPlan

        plan = TransportPlan(s, gamma, first, second)
        _, pmu = push_forward_plan(plan, mu)
        _, pnu = push_forward_plan(plan, nu)
        assert relative_entropy(pmu, pnu) <= relative_entropy(mu, nu) + 1e-9


def test_entropy_gap_convexity_under_pushforward():
    # mu -> Ent(mu|m) - Ent(gamma# mu|m) is convex along linear interpolation
    rng = SplitMix64(34)
    s = random_euclidean_space(rng, 6)
    raw = np.array([[rng.uniform() + 0.05 for _ in range(6)] for _ in range(6)])
    gamma = raw / raw.sum()
    from otflow.transport import TransportPlan

    plan = TransportPlan(
        s, gamma,
        DensityField(s, gamma.sum(axis=1) / s.measure),
        DensityField(s, gamma.sum(axis=0) / s.measure),
    )

    def gap(mu):
        _, pushed = push_forward_plan(plan, mu)
        return entropy(mu) - entropy(pushed)

    mu0 = random_density_values(rng, s)
    mu1 = random_density_values(rng, s)
    g0, g1 = gap(mu0), gap(mu1)
    for lam in (0.25, 0.5, 0.75):
        mix = DensityField(s, (1 - lam) * mu0.values + lam * mu1.values)
        assert gap(mix) <= (1 - lam) * g0 + lam * g1 + 1e-9


# -- geodesic plans and superposition ----------------------------------------------


def test_geodesic_plan_requires_hints(two_point):
    with pytest.raises(NoGeodesicStructure):
        geodesic_plan(deltas(two_point, 0), deltas(two_point, 1), 3)


def test_geodesic_plan_identity():
    s = gen_circle_grid(16)
    mu = preset_field("bump", {"center": 0.5, "width": 0.2}, s, density=True)
    plan = geodesic_plan(mu, mu, 5)
    assert plan.action() == 0.0
    for w, path in plan.curves:
        assert len(set(path)) == 1


def test_geodesic_plan_delta_pair_action():
    s = gen_circle_grid(64)
    mu = preset_field("dirac_like", {"at": 0}, s, density=True)
    nu = preset_field("dirac_like", {"at": 16}, s, density=True)  # arc distance 0.25
    exact = w2_cost(mu, nu)
    assert exact == pytest.approx(0.0625, abs=1e-15)
    plan = geodesic_plan(mu, nu, 5)  # M = 4
    assert plan.action() == pytest.approx(exact, rel=0.05)
    assert plan.action() >= exact - 1e-12


def test_geodesic_plan_two_slices_is_coupling():
    s = gen_circle_grid(16)
    mu = preset_field("bump", {"center": 0.2, "width": 0.15}, s, density=True)
    nu = preset_field("bump", {"center": 0.7, "width": 0.15}, s, density=True)
    cplan = geodesic_plan(mu, nu, 2)
    exact = w2_exact(mu, nu)
    pair = cplan.pair_marginal(0)
    assert np.allclose(pair, exact.gamma, atol=1e-12)
    assert cplan.action() == pytest.approx(exact.cost, abs=1e-12)


def test_geodesic_plan_marginals_and_action_band():
    s = gen_circle_grid(64)
    mu = preset_field("bump", {"center": 0.25, "width": 0.1}, s, density=True)
    nu = preset_field("bump", {"center": 0.6, "width": 0.1}, s, density=True)
    exact = w2_cost(mu, nu)
    plan = geodesic_plan(mu, nu, 9)
    assert np.allclose(plan.slice_masses(0), mu.masses(), atol=1e-9)
    assert np.allclose(plan.slice_masses(8), nu.masses(), atol=1e-9)
    action = plan.action()
    assert action >= exact - 1e-12
    overshoot = (action / exact - 1.0) / s.mesh
    assert action <= exact * (1 + overshoot * s.mesh) + 1e-12  # reported constant


def test_superpose_constant():
    from otflow.flows import Trajectory

    s = gen_circle_grid(8)
    mu = preset_field("bump", {"center": 0.4, "width": 0.25}, s, density=True)
    traj = Trajectory([0.0, 0.1, 0.2], [mu, mu, mu], [{}, {}], "jko_entropy")
    plan = superpose(traj)
    assert plan.action() == 0.0


def test_superpose_two_slices_exact():
    from otflow.flows import Trajectory

    s = gen_circle_grid(16)
    mu = preset_field("bump", {"center": 0.2, "width": 0.15}, s, density=True)
    nu = preset_field("bump", {"center": 0.8, "width": 0.15}, s, density=True)
    traj = Trajectory([0.0, 0.5], [mu, nu], [{}], "jko_entropy")
    plan = superpose(traj)
    assert plan.action() == pytest.approx(w2_cost(mu, nu) / 0.5, rel=1e-12)


def test_superpose_heat_slices_action_bound():
    from otflow.calculus import quadratic_backend
    from otflow.flows import heat_flow

    s = gen_circle_grid(32)
    f0 = preset_field("cosine_mode", {"k": 1, "amplitude": 0.5}, s, density=True)
    traj = heat_flow(f0, quadratic_backend(s), 5e-3, 2)
    plan = superpose(traj)
    bound = sum(
        w2_cost(traj.fields[k], traj.fields[k + 1]) / (traj.times[k + 1] - traj.times[k])
        for k in range(2)
    )
    assert plan.action() <= bound + 1e-9
    for k in range(3):
        assert np.allclose(plan.slice_masses(k), traj.fields[k].masses(), atol=1e-9)


# -- serialization -------------------------------------------------------------------


def test_plan_roundtrip(tmp_path):
    s = gen_circle_grid(12)
    mu = preset_field("bump", {"center": 0.1, "width": 0.2}, s, density=True)
    nu = preset_field("bump", {"center": 0.6, "width": 0.2}, s, density=True)
    plan = w2_exact(mu, nu)
    path = tmp_path / "plan.txt"
    save_plan(plan, path)
    loaded = load_plan(path, s)
    assert np.array_equal(loaded.gamma, plan.gamma)


def test_curve_plan_roundtrip(tmp_path):
    s = gen_circle_grid(16)
    mu = preset_field("bump", {"center": 0.2, "width": 0.15}, s, density=True)
    nu = preset_field("bump", {"center": 0.7, "width": 0.15}, s, density=True)
    plan = geodesic_plan(mu, nu, 4)
    path = tmp_path / "curves.txt"
    save_curve_plan(plan, path)
    loaded = load_curve_plan(path, s)
    assert loaded.curves == plan.curves
    assert np.array_equal(loaded.times, plan.times)
