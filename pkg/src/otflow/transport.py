"""Wasserstein-2 transport on finite spaces.

Exact plans come from a primal network simplex on the dense bipartite
graph (deterministic pivoting, so the returned vertex is reproducible);
the entropic solver is a log-domain Sinkhorn.  Kantorovich potentials are
extracted from the simplex duals and projected to c-concavity with a
double c-transform.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .errors import (
    AbsoluteContinuityViolation,
    DimensionMismatch,
    NoConvergence,
    NoGeodesicStructure,
    ParseError,
    SolverFailure,
)
from .fields import DensityField, ScalarField, same_space

MARGINAL_TOL = 1e-9


class TransportPlan:
    """Coupling gamma on X x X with prescribed marginal densities mu, nu."""

    def __init__(self, space, gamma, mu, nu, cost=None, is_optimal=False,
                 dual_u=None, dual_v=None, validate=True):
        self.space = space
        self.gamma = np.ascontiguousarray(gamma, dtype=np.float64)
        self.mu = mu
        self.nu = nu
        self.cost = float(np.sum(space.dist_sq * self.gamma)) if cost is None else float(cost)
        self.is_optimal = bool(is_optimal)
        self.dual_u = dual_u
        self.dual_v = dual_v
        if validate:
            self._validate()

    def _validate(self):
        g = self.gamma
        if g.shape != (self.space.n, self.space.n):
            raise DimensionMismatch(f"plan shape {g.shape} on space with n={self.space.n}")
        if np.any(g < 0):
            raise ParseError("plan has negative entries")
        row_err = float(np.max(np.abs(g.sum(axis=1) - self.mu.masses())))
        col_err = float(np.max(np.abs(g.sum(axis=0) - self.nu.masses())))
        tot_err = abs(float(g.sum()) - 1.0)
        if max(row_err, col_err, tot_err) > MARGINAL_TOL:
            raise ParseError(
                f"plan marginals off by (row {row_err:.2e}, col {col_err:.2e}, total {tot_err:.2e})"
            )

    def support(self, threshold=1e-15):
        """Index pairs (i, j) carrying mass above threshold."""
        return np.argwhere(self.gamma > threshold)

    def marginal_error(self):
        g = self.gamma
        return max(
            float(np.abs(g.sum(axis=1) - self.mu.masses()).sum()),
            float(np.abs(g.sum(axis=0) - self.nu.masses()).sum()),
        )

    def __repr__(self):
        flag = "optimal" if self.is_optimal else "feasible"
        return f"TransportPlan(n={self.space.n}, cost={self.cost:.6g}, {flag})"


class PotentialPair:
    """Kantorovich potential psi with its c-transform and the duality gap."""

    def __init__(self, psi, psi_c, gap):
        self.psi = psi
        self.psi_c = psi_c
        self.gap = float(gap)

    def dual_value(self, mu, nu):
        return float(self.psi.values @ mu.masses() + self.psi_c.values @ nu.masses())


class CurvePlan:
    """Weighted discrete curves with common slice times (a plan on paths)."""

    def __init__(self, space, curves, times, validate=True):
        self.space = space
        self.curves = [(float(w), tuple(int(p) for p in path)) for w, path in curves]
        self.times = np.asarray(times, dtype=np.float64)
        if validate:
            total = sum(w for w, _ in self.curves)
            if abs(total - 1.0) > MARGINAL_TOL:
                raise ParseError(f"curve weights sum to {total!r}")
            for w, path in self.curves:
                if len(path) != len(self.times):
                    raise DimensionMismatch("curve length does not match slice times")
                if w < 0:
                    raise ParseError("curve weights must be nonnegative")

    @property
    def n_slices(self):
        return len(self.times)

    def slice_masses(self, k):
        out = np.zeros(self.space.n)
        for w, path in self.curves:
            out[path[k]] += w
        return out

    def slice_density(self, k):
        return DensityField(self.space, self.slice_masses(k) / self.space.measure)

    def action(self):
        """Discrete kinetic action sum_c w sum_k d(p_k, p_{k+1})^2 / dt_k."""
        d = self.space.dist
        dt = np.diff(self.times)
        total = 0.0
        for w, path in self.curves:
            steps = np.array([d[path[k], path[k + 1]] for k in range(len(path) - 1)])
            total += w * float(np.sum(steps**2 / dt))
        return total

    def pair_marginal(self, k):
        """Coupling matrix between slices k and k+1."""
        g = np.zeros((self.space.n, self.space.n))
        for w, path in self.curves:
            g[path[k], path[k + 1]] += w
        return g

    def __repr__(self):
        return f"CurvePlan(curves={len(self.curves)}, slices={self.n_slices})"


# -- exact solver -------------------------------------------------------------


def w2_exact(mu, nu):
    """Optimal plan for the quadratic cost; cost field equals W2^2.

    The minimization is a finite LP solved exactly by the network simplex
    kernel; zero-mass points are reduced away and the duals are completed
    on them afterwards so that u_i + v_j <= d(i,j)^2 holds everywhere.
    """
    space = same_space(mu, nu)
    a_full = mu.masses()
    b_full = nu.masses()
    keep_i = np.flatnonzero(a_full > 0.0)
    keep_j = np.flatnonzero(b_full > 0.0)
    a = a_full[keep_i]
    b = b_full[keep_j]
    b = b * (a.sum() / b.sum())
    cost = np.ascontiguousarray(space.dist_sq[np.ix_(keep_i, keep_j)])

    gamma_red, u_red, v_red, _ = _kernels.transport_simplex(cost, a, b)

    n = space.n
    gamma = np.zeros((n, n))
    gamma[np.ix_(keep_i, keep_j)] = gamma_red
    u = np.empty(n)
    v = np.empty(n)
    u[keep_i] = u_red
    v[keep_j] = v_red
    dsq = space.dist_sq
    drop_j = np.setdiff1d(np.arange(n), keep_j, assume_unique=False)
    if drop_j.size:
        v[drop_j] = np.min(dsq[np.ix_(keep_i, drop_j)] - u[keep_i, None], axis=0)
    drop_i = np.setdiff1d(np.arange(n), keep_i, assume_unique=False)
    if drop_i.size:
        u[drop_i] = np.min(dsq[drop_i] - v[None, :], axis=1)

    total_cost = float(np.sum(dsq * gamma))
    return TransportPlan(space, gamma, mu, nu, cost=total_cost, is_optimal=True,
                         dual_u=u, dual_v=v)


def w2_cost(mu, nu):
    return w2_exact(mu, nu).cost


def w2_distance(mu, nu):
    return math.sqrt(max(w2_cost(mu, nu), 0.0))


# -- entropic solver ----------------------------------------------------------


def default_epsilon(space):
    """1e-2 times the median off-diagonal squared distance."""
    dsq = space.dist_sq
    off = dsq[~np.eye(space.n, dtype=bool)]
    return 1e-2 * float(np.median(off))


def w2_entropic(mu, nu, epsilon=None, max_iter=100_000, tol=1e-9):
    """Log-domain Sinkhorn with warm-started epsilon annealing.

    The regularization is walked down from max(d^2)/8 to the target
    epsilon (factor 4 per level, dual potentials carried over), which
    keeps the final level fast even when epsilon is far below the cost
    scale.  Success means L1 marginal error at most tol; the row marginal
    is pinned exactly by a final rescale.
    """
    space = same_space(mu, nu)
    if epsilon is None:
        epsilon = default_epsilon(space)
    if not epsilon > 0:
        raise SolverFailure(f"epsilon must be positive, got {epsilon!r}")
    a = mu.masses()
    b = nu.masses()
    b = b * (a.sum() / b.sum())
    c = space.dist_sq
    with np.errstate(divide="ignore"):
        log_a = np.log(a)
        log_b = np.log(b)

    levels = []
    eps = max(float(c.max()) / 8.0, epsilon)
    while eps > epsilon:
        levels.append(eps)
        eps /= 4.0
    levels.append(epsilon)

    phi = np.zeros(space.n)
    psi = np.zeros(space.n)
    err = np.inf
    spent = 0
    for level, eps in enumerate(levels):
        final = level == len(levels) - 1
        budget = max_iter - spent if final else max(50, (max_iter - spent) // 20)
        d_prev = None
        psi_prev = psi.copy()
        for it in range(budget):
            spent += 1
            phi = eps * (log_a - logsumexp((psi[None, :] - c) / eps, axis=1))
            psi_new = eps * (log_b - logsumexp((phi[:, None] - c) / eps, axis=0))
            delta = float(np.max(np.abs(psi_new - psi)))
            d_cur = psi_new - psi_prev if it % 50 == 49 else None
            if final and it % 50 == 49:
                # Aitken step along the dominant geometric mode: the slow
                # Sinkhorn tail (near-decoupled clusters) collapses in one jump
                if d_prev is not None:
                    den = float(d_prev @ d_prev)
                    rho = float(d_cur @ d_prev) / den if den > 0 else 0.0
                    if 0.0 < rho < 1.0:
                        psi_new = psi_new + d_cur * rho / (1.0 - rho)
                d_prev = d_cur
                psi_prev = psi_new.copy()
            psi = psi_new
            if final and (it % 10 == 9 or delta <= 1e-15):
                log_gamma = (phi[:, None] + psi[None, :] - c) / eps
                err = float(np.abs(np.exp(logsumexp(log_gamma, axis=1)) - a).sum())
                if err <= tol:
                    break
            elif not final and delta <= 1e-8 * (1.0 + eps):
                break
        if final and err > tol:
            raise NoConvergence(max_iter, err)
    # one last row rescale pins the first marginal exactly
    phi = epsilon * (log_a - logsumexp((psi[None, :] - c) / epsilon, axis=1))
    gamma = np.exp((phi[:, None] + psi[None, :] - c) / epsilon)
    return TransportPlan(space, gamma, mu, nu, is_optimal=False)


# -- c-transform calculus ------------------------------------------------------


def c_transform(psi):
    """psi^c(y) = min_x d(x,y)^2/2 - psi(x), the exact finite minimum."""
    space = psi.space
    vals = np.min(space.dist_sq * 0.5 - psi.values[:, None], axis=0)
    return ScalarField(space, vals)


def kantorovich_potential(mu, nu, plan=None):
    """c-concave maximizer of the dual problem, from the exact solver's duals.

    The simplex duals (u, v) for the cost d^2 satisfy u_i + v_j <= d_ij^2
    with equality on the support; psi = u/2 is dual-feasible for the
    half-cost problem and one double c-transform projects it onto the
    c-concave cone without losing dual value.
    """
    space = same_space(mu, nu)
    if plan is None:
        plan = w2_exact(mu, nu)
    if plan.dual_u is None:
        raise SolverFailure("plan carries no dual variables")
    psi0 = ScalarField(space, plan.dual_u * 0.5)
    psi = c_transform(c_transform(psi0))
    psi_c = c_transform(psi)
    gap = 0.5 * plan.cost - (psi.values @ mu.masses() + psi_c.values @ nu.masses())
    if abs(gap) > 1e-6:
        raise SolverFailure(f"duality gap {gap:.3e} exceeds 1e-6")
    return PotentialPair(psi, psi_c, gap)


# -- entropy -------------------------------------------------------------------


def entropy(mu):
    """Ent(mu | m) = sum f log f m with the 0 log 0 = 0 convention."""
    f = mu.values
    m = mu.space.measure
    terms = np.where(f > 0, f * np.log(np.where(f > 0, f, 1.0)), 0.0)
    return float(terms @ m)


def relative_entropy(mu, nu):
    """Ent(mu | nu); +inf when mu has mass where nu vanishes."""
    same_space(mu, nu)
    f = mu.values
    g = nu.values
    if np.any((f > 0) & (g == 0)):
        return math.inf
    ratio = np.where(f > 0, f / np.where(g > 0, g, 1.0), 1.0)
    terms = np.where(f > 0, f * np.log(ratio), 0.0)
    return float(terms @ mu.space.measure)


# -- push forward via a plan ----------------------------------------------------


def push_forward_plan(plan, mu):
    """Plan-conditioned reweighting gamma_mu and the pushforward density.

    gamma_mu spreads mu through the disintegration of gamma over its first
    marginal; the returned density is that of the second marginal of
    gamma_mu with respect to the reference measure.
    """
    space = same_space(plan.mu, mu)
    g = plan.gamma
    first = g.sum(axis=1)
    w = mu.masses()
    bad = (w > 0) & (first <= 0)
    if np.any(bad):
        raise AbsoluteContinuityViolation(int(np.argmax(bad)))
    scale = np.where(first > 0, w / np.where(first > 0, first, 1.0), 0.0)
    gamma_mu = g * scale[:, None]
    pushed_masses = gamma_mu.sum(axis=0)
    eta = DensityField(space, pushed_masses / space.measure)
    out_plan = TransportPlan(space, gamma_mu, mu, eta, is_optimal=False)
    return out_plan, eta


# -- geodesic plans and superposition -------------------------------------------


def _snap_index(positions, target):
    """Index of the position closest to target; exact ties to the lower index."""
    diffs = np.abs(positions - target)
    return int(np.argmin(diffs))


def geodesic_plan(mu0, mu1, slices):
    """Discrete optimal geodesic plan with `slices` time slices.

    Every support pair of the exact plan follows its geodesic hint,
    snapping each intermediate time to the hint point nearest to the
    ideal constant-speed position (ties to the lower hint index).
    """
    space = same_space(mu0, mu1)
    if not space.has_geodesic_hints:
        raise NoGeodesicStructure()
    if slices < 2:
        raise DimensionMismatch(f"need at least 2 slices, got {slices}")
    plan = w2_exact(mu0, mu1)
    times = np.linspace(0.0, 1.0, slices)
    d = space.dist
    curves = []
    for i, j in plan.support():
        wgt = plan.gamma[i, j]
        if i == j:
            curves.append((wgt, (int(i),) * slices))
            continue
        hint = space.geodesic_hint(int(i), int(j))
        steps = np.array([d[hint[k], hint[k + 1]] for k in range(len(hint) - 1)])
        pos = np.concatenate(([0.0], np.cumsum(steps)))
        length = pos[-1]
        path = [int(hint[_snap_index(pos, t * length)]) for t in times]
        path[0], path[-1] = int(i), int(j)
        curves.append((wgt, tuple(path)))
    return CurvePlan(space, curves, times)


def superpose(traj):
    """Glue exact plans between consecutive slices into a plan on curves.

    The result matches every slice marginal and its action equals
    sum_k W2^2(mu_k, mu_{k+1}) / dt_k, the discrete gluing bound.
    """
    fields = traj.fields
    if len(fields) < 2:
        raise DimensionMismatch("need at least two slices to superpose")
    space = same_space(*fields)
    times = np.asarray(traj.times, dtype=np.float64)
    # curves grouped by current endpoint: point -> list of (weight, path)
    at_point = {}
    for i, mass in enumerate(fields[0].masses()):
        if mass > 0:
            at_point.setdefault(i, []).append((float(mass), [i]))
    for k in range(len(fields) - 1):
        plan = w2_exact(fields[k], fields[k + 1])
        nxt = {}
        for i, bundle in at_point.items():
            row = plan.gamma[i]
            total = row.sum()
            if total <= 0:
                continue
            for j in np.flatnonzero(row > 0):
                frac = row[j] / total
                for w, path in bundle:
                    nxt.setdefault(int(j), []).append((w * frac, path + [int(j)]))
        at_point = nxt
    curves = [(w, tuple(path)) for bundle in at_point.values() for w, path in bundle]
    return CurvePlan(space, curves, times)


# -- serialization ---------------------------------------------------------------

_FMT = "%.17g"


def save_plan(plan, path):
    """Sparse (i, j, mass) triples, one per line."""
    with open(path, "w") as fh:
        fh.write(f"n {plan.space.n}\n")
        for i, j in plan.support(threshold=0.0):
            fh.write(f"{i} {j} " + _FMT % plan.gamma[i, j] + "\n")


def load_plan(path, space):
    gamma = np.zeros((space.n, space.n))
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != "n" or int(header[1]) != space.n:
            raise ParseError("plan header does not match space", line=1)
        for k, ln in enumerate(fh):
            ln = ln.strip()
            if not ln:
                continue
            parts = ln.split()
            if len(parts) != 3:
                raise ParseError("plan line must be 'i j mass'", line=k + 2)
            gamma[int(parts[0]), int(parts[1])] = float(parts[2])
    mu = DensityField(space, gamma.sum(axis=1) / space.measure)
    nu = DensityField(space, gamma.sum(axis=0) / space.measure)
    return TransportPlan(space, gamma, mu, nu, is_optimal=False)


def save_curve_plan(cplan, path):
    with open(path, "w") as fh:
        fh.write("times " + " ".join(_FMT % t for t in cplan.times) + "\n")
        for w, p in cplan.curves:
            fh.write(_FMT % w + " " + " ".join(str(i) for i in p) + "\n")


def load_curve_plan(path, space):
    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != "times":
            raise ParseError("curve plan must start with a times line", line=1)
        times = [float(t) for t in header[1:]]
        curves = []
        for k, ln in enumerate(fh):
            parts = ln.split()
            if not parts:
                continue
            if len(parts) != len(times) + 1:
                raise ParseError("curve length does not match times", line=k + 2)
            curves.append((float(parts[0]), tuple(int(p) for p in parts[1:])))
    return CurvePlan(space, curves, times)
