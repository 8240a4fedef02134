"""Quantitative residual checks for the theorems the flows are supposed to obey.

Every check returns a DiagnosticsReport whose pass flag is a pure function
of residuals vs tolerances.  Tolerances default to C * (tau + h) with
C = 2 unless a check states its own scale; every report records the
scales it used in its context block.
"""

from __future__ import annotations

import math

import numpy as np

from .calculus import parallelogram_defect, slope, slope_backend
from .errors import DegeneratePlan, DimensionMismatch, NoGeodesicStructure, NotBoundedBelow
from .fields import DensityField, ScalarField, same_space
from .flows import (
    entropy_along,
    fisher_along,
    fisher_information,
    heat_flow,
    metric_speed,
)
from .hopflax import hopf_lax
from .mmspace import gen_box_grid
from .report import DiagnosticsReport
from .rng import SplitMix64
from .transport import (
    entropy,
    geodesic_plan,
    kantorovich_potential,
    w2_cost,
    w2_exact,
)

DEFAULT_C = 2.0


def _mesh(space):
    return space.mesh if space.mesh is not None else space.diameter


def _tau_of(traj):
    dts = np.diff(traj.times)
    return float(dts.max())


def ede_residual(traj, C=DEFAULT_C):
    """Energy Dissipation Equality residual along an entropy trajectory.

    r(T) = |Ent(mu_0) - Ent(mu_T) - (1/2) sum speed^2 dt
           - (1/2) trapz Fisher dt| per slice time T, plus the universal
    dissipation bound (Young's inequality direction): the entropy drop may
    exceed the dissipation sum only by quadrature slack.
    """
    if not traj.is_density():
        raise DimensionMismatch("ede_residual needs a density trajectory")
    ents = entropy_along(traj)
    speeds = metric_speed(traj, metric="w2")
    fisher, _ = fisher_along(traj)
    times = np.asarray(traj.times)
    worst = 0.0
    direction = 0.0
    for e in range(1, len(times)):
        drop = ents[0] - ents[e]
        sp = 0.5 * sum(speeds[k] ** 2 * (times[k + 1] - times[k]) for k in range(e))
        fi = 0.5 * float(np.trapezoid(fisher[: e + 1], times[: e + 1]))
        r = drop - sp - fi
        worst = max(worst, abs(r))
        direction = max(direction, r)
    tau = _tau_of(traj)
    h = _mesh(traj.space)
    return DiagnosticsReport(
        "ede_residual",
        {"max_abs_residual": worst, "dissipation_bound_violation": direction},
        {"max_abs_residual": C * (tau + h), "dissipation_bound_violation": 1e-6},
        context={"tau": tau, "h": h, "C": C, "T": times[-1],
                 "ent_start": ents[0], "ent_end": ents[-1]},
    )


def evi_residual(traj, probes, K=0.0, C=DEFAULT_C):
    """Integrated Evolution Variational Inequality residual.

    For probe z and consecutive slices t < s:
    [ (W2^2(mu_s, z) - W2^2(mu_t, z))/2 + (K/2) int W2^2 + int Ent
      - (s - t) Ent(z) ]^+ , time integrals by trapezoid.
    """
    if not traj.is_density():
        raise DimensionMismatch("evi_residual needs a density trajectory")
    times = np.asarray(traj.times)
    ents = entropy_along(traj)
    worst = 0.0
    for z in probes:
        same_space(traj.fields[0], z)
        w2s = [w2_cost(f, z) for f in traj.fields]
        ent_z = entropy(z)
        for k in range(len(times) - 1):
            dt = times[k + 1] - times[k]
            w2_int = 0.5 * (w2s[k] + w2s[k + 1]) * dt
            ent_int = 0.5 * (ents[k] + ents[k + 1]) * dt
            viol = (
                0.5 * (w2s[k + 1] - w2s[k])
                + 0.5 * K * w2_int
                + ent_int
                - dt * ent_z
            )
            worst = max(worst, viol)
    tau = _tau_of(traj)
    h = _mesh(traj.space)
    return DiagnosticsReport(
        "evi_residual",
        {"max_violation": max(worst, 0.0)},
        {"max_violation": C * (tau + h)},
        context={"K": K, "tau": tau, "h": h, "C": C, "probes": len(probes)},
    )


def kuwada_check(traj, C=DEFAULT_C):
    """W2-speed^2 <= Fisher along a heat-flow density trajectory, per step.

    Fisher is evaluated at the left slice of each step (it decays along
    the flow).  Raises NotBoundedBelow when a slice dips under 1e-8.
    """
    if traj.flow_kind != "l2_heat" or not traj.is_density():
        raise DimensionMismatch("kuwada_check needs an l2_heat density trajectory")
    minval = min(float(f.values.min()) for f in traj.fields)
    if minval < 1e-8:
        raise NotBoundedBelow(minval)
    speeds = metric_speed(traj, metric="w2")
    fisher, _ = fisher_along(traj)
    viol = max(max(sp * sp - fisher[k], 0.0) for k, sp in enumerate(speeds))
    tau = _tau_of(traj)
    h = _mesh(traj.space)
    return DiagnosticsReport(
        "kuwada",
        {"max_violation": viol},
        {"max_violation": C * (tau + h)},
        context={"tau": tau, "h": h, "C": C, "min_density": minval},
    )


def brenier_check(mu0, mu1, C=DEFAULT_C):
    """Metric Brenier residuals for the pair (mu0, mu1).

    a: plan-weighted mean of |d(x, y) - ascending-slope(psi)(x)| over the
       optimal plan's support (transport distance determined by the start
       point through the potential's ascending slope);
    b: |W2^2 - int slope(psi)^2 f0 dm|.
    """
    space = same_space(mu0, mu1)
    plan = w2_exact(mu0, mu1)
    pot = kantorovich_potential(mu0, mu1, plan=plan)
    h = _mesh(space)
    asc = slope(pot.psi, h, "ascending").values
    two = slope(pot.psi, h, "two_sided").values

    support = plan.support()
    mass = plan.gamma[support[:, 0], support[:, 1]]
    gaps = np.abs(space.dist[support[:, 0], support[:, 1]] - asc[support[:, 0]])
    residual_a = float(np.sum(mass * gaps) / np.sum(mass))
    residual_b = abs(plan.cost - float((two * two * mu0.values) @ space.measure))
    return DiagnosticsReport(
        "metric_brenier",
        {"support_distance_gap": residual_a, "energy_identity_gap": residual_b},
        {
            "support_distance_gap": C * h * space.diameter,
            "energy_identity_gap": C * h * max(plan.cost, 1e-12),
        },
        context={"h": h, "C": C, "w2_sq": plan.cost, "gap": pot.gap},
    )


def quadraticity_check(space, probe_fields, C=DEFAULT_C, flow_steps=5,
                       flow_tau=None, finsler_floor=0.5):
    """Parallelogram-law and flow-linearity test of the slope energy.

    Verdict 'riemannian-like' when the worst pairwise parallelogram
    defect and the short heat-flow additivity defect both stay below
    C * h; 'finsler-like' when some pair's defect reaches the floor.
    """
    if len(probe_fields) < 2:
        raise DimensionMismatch("need at least 2 probe fields")
    for f in probe_fields:
        same_space(f, probe_fields[0])
    backend = slope_backend()
    h = _mesh(space)
    worst = 0.0
    for a in range(len(probe_fields)):
        for b in range(a + 1, len(probe_fields)):
            worst = max(worst, abs(parallelogram_defect(probe_fields[a], probe_fields[b], backend)))

    if flow_tau is None:
        flow_tau = h * h
    f, g = probe_fields[0], probe_fields[1]
    fg = ScalarField(space, f.values + g.values)
    tf = heat_flow(f, backend, flow_tau, flow_steps)
    tg = heat_flow(g, backend, flow_tau, flow_steps)
    tfg = heat_flow(fg, backend, flow_tau, flow_steps)
    additivity = max(
        float(np.max(np.abs(tfg.fields[k].values - tf.fields[k].values - tg.fields[k].values)))
        for k in range(flow_steps + 1)
    )
    verdict = "riemannian-like" if (worst <= C * h and additivity <= C * h) else (
        "finsler-like" if worst >= finsler_floor else "inconclusive"
    )
    return DiagnosticsReport(
        "quadraticity",
        {"max_parallelogram_defect": worst, "flow_additivity_defect": additivity},
        {"max_parallelogram_defect": C * h, "flow_additivity_defect": C * h},
        context={"h": h, "C": C, "verdict": verdict, "flow_tau": flow_tau,
                 "flow_steps": flow_steps, "finsler_floor": finsler_floor},
    )


def _reweight_curves(cplan, factors):
    total = sum(w * f for (w, _), f in zip(cplan.curves, factors))
    return [(w * f / total, path) for (w, path), f in zip(cplan.curves, factors)]


def displacement_convexity_check(mu0, mu1, K=0.0, slices=9, reweightings=3,
                                 seed=7, C=DEFAULT_C):
    """K-convexity of the entropy along the discrete geodesic plan.

    Checks Ent(mu_t) <= (1-t) Ent(mu_0) + t Ent(mu_1)
    - (K/2) t (1-t) W2^2(mu_0, mu_1) on the slice marginals, then repeats
    with random bounded reweightings of the curve plan (the strong
    variant), endpoint distances recomputed per reweighting.
    """
    space = same_space(mu0, mu1)
    if not space.has_geodesic_hints:
        raise NoGeodesicStructure()
    cplan = geodesic_plan(mu0, mu1, slices)
    h = _mesh(space)

    def convexity_violation(curves):
        from .transport import CurvePlan

        plan = CurvePlan(space, curves, cplan.times, validate=False)
        slices_rho = [plan.slice_density(k) for k in range(plan.n_slices)]
        e0 = entropy(slices_rho[0])
        e1 = entropy(slices_rho[-1])
        w2sq = w2_cost(slices_rho[0], slices_rho[-1])
        worst = 0.0
        for k, t in enumerate(plan.times):
            bound = (1 - t) * e0 + t * e1 - 0.5 * K * t * (1 - t) * w2sq
            worst = max(worst, entropy(slices_rho[k]) - bound)
        return worst

    base = convexity_violation(cplan.curves)
    rng = SplitMix64(seed)
    strong = 0.0
    for _ in range(reweightings):
        factors = [0.5 + rng.uniform() for _ in cplan.curves]
        strong = max(strong, convexity_violation(_reweight_curves(cplan, factors)))
    return DiagnosticsReport(
        "displacement_convexity",
        {"max_violation": max(base, 0.0), "strong_variant_violation": max(strong, 0.0)},
        {"max_violation": C * h, "strong_variant_violation": C * h},
        context={"K": K, "h": h, "C": C, "slices": slices,
                 "reweightings": reweightings, "seed": seed},
    )


def horizontal_vertical_check(f, g, plan, eps, C=DEFAULT_C):
    """Horizontal vs vertical derivative comparison along a curve plan.

    lhs: plan-weighted first-slice difference quotient of f;
    rhs: (1/2) plan-weighted (slope(g)^2 - slope(g + eps f)^2)/eps at the
    curve starts.  The violation is (rhs - lhs)^+.
    """
    space = same_space(f, g)
    if plan.n_slices < 2:
        raise DegeneratePlan("plan needs at least 2 slices")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    dt = plan.times[1] - plan.times[0]
    h = _mesh(space)
    sg = slope(g, h, "two_sided").values
    gef = ScalarField(space, g.values + eps * f.values)
    sge = slope(gef, h, "two_sided").values
    lhs = sum(w * (f.values[p[1]] - f.values[p[0]]) / dt for w, p in plan.curves)
    rhs = 0.5 * sum(w * (sg[p[0]] ** 2 - sge[p[0]] ** 2) / eps for w, p in plan.curves)
    viol = max(rhs - lhs, 0.0)
    return DiagnosticsReport(
        "horizontal_vertical",
        {"violation": viol},
        {"violation": C * (h / dt + eps)},
        context={"eps": eps, "dt": dt, "h": h, "C": C,
                 "lhs": float(lhs), "rhs": float(rhs)},
    )


def dw2_heatflow_check(traj, sigma, C=DEFAULT_C):
    """d/dt (1/2) W2^2(f_t m, sigma) vs int phi_t Delta f_t dm.

    Central difference over interior slices against the potential-paired
    Laplacian, quadratic backend (the trajectory must come from one).
    """
    from .calculus import laplacian, quadratic_backend

    if traj.flow_kind != "l2_heat" or not traj.is_density():
        raise DimensionMismatch("dw2_heatflow_check needs an l2_heat density trajectory")
    space = same_space(traj.fields[0], sigma)
    times = traj.times
    backend = quadratic_backend(space)
    w2s = [0.5 * w2_cost(f, sigma) for f in traj.fields]
    worst = 0.0
    signed = []
    for k in range(1, len(times) - 1):
        dt2 = times[k + 1] - times[k - 1]
        lhs = (w2s[k + 1] - w2s[k - 1]) / dt2
        pot = kantorovich_potential(traj.fields[k], sigma)
        lap = laplacian(traj.fields[k], backend)
        rhs = float((pot.psi.values * lap.values) @ space.measure)
        worst = max(worst, abs(lhs - rhs))
        signed.append(lhs)
    tau = _tau_of(traj)
    h = _mesh(space)
    return DiagnosticsReport(
        "dw2_heatflow",
        {"max_gap": worst},
        {"max_gap": C * (tau + h)},
        context={"tau": tau, "h": h, "C": C,
                 "derivatives": [float(v) for v in signed]},
    )


def ede_nonuniqueness_demo(side=9, steps=4):
    """EDE non-uniqueness for E(x, y) = x on the linf grid.

    The straight curve and the unit-rate diagonal both satisfy the EDE
    balance exactly; a double-rate diagonal breaks it.  The third residual
    is the slack (0.1 - r_fast)^+ so the report passes exactly when the
    out-of-family curve genuinely fails.
    """
    space = gen_box_grid(side, "linf")
    h = space.mesh
    energy = ScalarField(space, np.array([(i % side) * h for i in range(space.n)]))
    desc = slope(energy, h, "descending").values

    def idx(row, col):
        return row * side + col

    row0 = side // 2
    col0 = side - 1

    def ede_point_residual(path):
        """|E drop - kinetic/2 - slope^2/2| for a unit-time-step index curve."""
        t = np.arange(len(path)) * h
        drop = energy.values[path[0]] - energy.values[path[-1]]
        kinetic = 0.5 * sum(
            (space.dist[path[k], path[k + 1]] / h) ** 2 * h for k in range(len(path) - 1)
        )
        slope_term = 0.5 * float(np.trapezoid(desc[list(path)] ** 2, t))
        return abs(drop - kinetic - slope_term)

    straight = [idx(row0, col0 - k) for k in range(steps + 1)]
    diagonal = [idx(row0 + k, col0 - k) for k in range(steps + 1)]
    fast_steps = min(steps, (side - 1 - row0) // 2, col0)
    fast = [idx(row0 + 2 * k, col0 - k) for k in range(fast_steps + 1)]

    r_straight = ede_point_residual(straight)
    r_diag = ede_point_residual(diagonal)
    r_fast = ede_point_residual(fast)
    return DiagnosticsReport(
        "ede_nonuniqueness",
        {
            "straight_curve": r_straight,
            "diagonal_curve": r_diag,
            "fast_curve_slack": max(0.1 - r_fast, 0.0),
        },
        {"straight_curve": 1e-9, "diagonal_curve": 1e-9, "fast_curve_slack": 0.0},
        context={"side": side, "steps": steps, "fast_residual": r_fast},
    )


# -- helpers used by the property suite -------------------------------------------


def entropy_slope_lower_bound(mu, probes, K=0.0):
    """Probe-pool sup of [Ent(mu) - Ent(nu) + (K/2) W2^2]^+ / W2.

    A certified lower bound for the descending slope of the entropy (the
    true value is a sup over all of P(X)).
    """
    best = 0.0
    for nu in probes:
        w2 = math.sqrt(max(w2_cost(mu, nu), 0.0))
        if w2 <= 0:
            continue
        val = (entropy(mu) - entropy(nu) + 0.5 * K * w2 * w2) / w2
        best = max(best, val)
    return best


def random_density(space, rng):
    """Full-support density with exponential weights from the seeded stream."""
    raw = np.array([-math.log(1.0 - rng.uniform()) + 1e-3 for _ in range(space.n)])
    vals = raw / float(raw @ space.measure)
    resid = 1.0 - float(vals @ space.measure)
    vals[-1] += resid / space.measure[-1]
    return DensityField(space, vals)
