"""Exact Hopf-Lax semigroup on finite spaces and its Hamilton-Jacobi residuals.

Q_t f(x) = min_y f(y) + d(x,y)^2/(2t) is an exact finite minimum here, so
the semigroup properties hold up to floating point and the only genuine
discretization enters through the slope radius h and the time step dt.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import NonPositiveTime
from .fields import ScalarField
from .report import DiagnosticsReport

ARGMIN_BAND = 1e-12  # relative width of the argmin tie band


class HopfLaxResult:
    """Q_t f together with the extremal minimizer distances D^-/D^+."""

    def __init__(self, q, d_minus, d_plus, t):
        self.q = q
        self.d_minus = d_minus
        self.d_plus = d_plus
        self.t = float(t)

    def __repr__(self):
        return f"HopfLaxResult(t={self.t:g}, n={self.q.space.n})"


def hopf_lax(f, t):
    """Evaluate Q_t f exactly; D^± are extremal distances over the argmin band.

    The band contains every y whose objective lies within
    1e-12 * (1 + |Q_t f(x)|) of the minimum, which fixes the floating-point
    meaning of 'argmin set'.
    """
    if not t > 0:
        raise NonPositiveTime(t)
    space = f.space
    q, d_minus, d_plus = _kernels.hopf_lax_eval(
        space.dist, space.dist_sq, f.values, float(t), ARGMIN_BAND
    )
    return HopfLaxResult(ScalarField(space, q), d_minus, d_plus, t)


def check_dpm_monotone(f, times):
    """Monotonicity of the minimizer distances: D^+(x,t) <= D^-(x,s) for t < s.

    Exact at the finite level; the report's residual is the largest
    positive part of D^+(x,t) - D^-(x,s) over all x and all t < s.
    """
    times = [float(t) for t in times]
    if any(t <= 0 for t in times):
        raise NonPositiveTime(min(times))
    if any(s <= t for t, s in zip(times, times[1:])):
        raise ValueError("times must be strictly increasing")
    results = [hopf_lax(f, t) for t in times]
    worst = 0.0
    for a in range(len(times)):
        for b in range(a + 1, len(times)):
            gap = results[a].d_plus - results[b].d_minus
            worst = max(worst, float(gap.max()))
    diam = f.space.diameter
    return DiagnosticsReport(
        "dpm_monotone",
        {"max_violation": max(worst, 0.0)},
        {"max_violation": 1e-12 * diam},
        context={"times": times, "n": f.space.n},
    )


def hj_residuals(f, t, dt=None):
    """Hamilton-Jacobi residuals of Q_t f at a single time.

    Central difference in time (default dt = t/100), discrete slope at the
    space's mesh radius, and three residual families:

    - sub: (d/dt Q + |DQ|^2/2)^+, the subsolution defect;
    - sup: |d/dt Q + |DQ|^2/2|, reported only on geodesic-hinted spaces;
    - dini: |d/dt Q + Dmid^2/(2 t^2)| with Dmid the midpoint of D^-/D^+.

    Tolerances scale like C*(h + dt) with C = 2; on spaces without a mesh
    the diameter is used as the slope radius.
    """
    if not t > 0:
        raise NonPositiveTime(t)
    if dt is None:
        dt = t / 100.0
    if not 0 < dt < t:
        raise NonPositiveTime(dt)
    from .calculus import slope  # local import: calculus is a heavier module

    space = f.space
    res_mid = hopf_lax(f, t)
    q_plus = hopf_lax(f, t + dt).q.values
    q_minus = hopf_lax(f, t - dt).q.values
    dq_dt = (q_plus - q_minus) / (2.0 * dt)

    h = space.mesh if space.mesh is not None else space.diameter
    sl = slope(res_mid.q, h, "two_sided").values
    hj = dq_dt + 0.5 * sl * sl
    d_mid = 0.5 * (res_mid.d_plus + res_mid.d_minus)
    dini = np.abs(dq_dt + d_mid * d_mid / (2.0 * t * t))

    lip = f.lipschitz()
    scale = max(1.0, lip * lip)
    tol = 2.0 * (h + dt) * scale
    residuals = {"max_subsolution": float(np.maximum(hj, 0.0).max()),
                 "max_dini": float(dini.max())}
    tolerances = {"max_subsolution": tol, "max_dini": tol}
    if space.has_geodesic_hints:
        residuals["max_supersolution"] = float(np.abs(hj).max())
        tolerances["max_supersolution"] = tol
    report = DiagnosticsReport(
        "hj_residuals", residuals, tolerances,
        context={"t": t, "dt": dt, "h": h, "n": space.n},
    )
    report.per_point = {"dq_dt": dq_dt, "slope": sl, "hj": hj, "dini": dini}
    return report
