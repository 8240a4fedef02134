"""The two gradient flows and their trajectory bookkeeping.

Heat flow: implicit Euler for the Cheeger energy in L^2(m), a sparse
linear solve per step on the quadratic backend and a proximal step on the
slope backend.  JKO flow: minimizing movement for the relative entropy in
(P(X), W2), each step solved over the coupling with fixed first marginal
by alternating dual updates under a decreasing entropic regularization
(closed-form updates, warm-started across levels).
"""

from __future__ import annotations

import json
import math
import os

import numpy as np
from scipy.special import logsumexp

from .calculus import (
    EnergyBackend,
    carre_du_champ,
    cheeger_energy,
    heat_step_solver,
    slope_prox,
)
from .errors import DimensionMismatch, InnerSolverFailure, ParseError, ProxNoConvergence
from .fields import DensityField, ScalarField, load_field, same_space, save_field
from .transport import entropy, w2_cost

FLOW_KINDS = ("l2_heat", "jko_entropy")


class Trajectory:
    """Time-stamped fields with per-step solver metadata."""

    def __init__(self, times, fields, step_meta, flow_kind, validate=True):
        self.times = [float(t) for t in times]
        self.fields = list(fields)
        self.step_meta = list(step_meta)
        self.flow_kind = flow_kind
        if validate:
            if flow_kind not in FLOW_KINDS:
                raise ParseError(f"unknown flow kind {flow_kind!r}")
            if len(self.times) != len(self.fields):
                raise DimensionMismatch("times and fields lengths differ")
            if any(s <= t for t, s in zip(self.times, self.times[1:])):
                raise ParseError("times must be strictly increasing")
            if len(self.step_meta) != max(len(self.times) - 1, 0):
                raise DimensionMismatch("need one step_meta entry per step")
            same_space(*self.fields)

    @property
    def space(self):
        return self.fields[0].space

    @property
    def n_steps(self):
        return len(self.times) - 1

    def is_density(self):
        return all(isinstance(f, DensityField) for f in self.fields)

    def __repr__(self):
        return f"Trajectory({self.flow_kind}, steps={self.n_steps}, n={self.space.n})"


def _as_density(space, values):
    vals = np.where(np.abs(values) < 1e-13, np.maximum(values, 0.0), values)
    return DensityField(space, vals)


def heat_flow(f0, backend, tau, steps):
    """Implicit Euler f_{k+1} = argmin C(g) + ||g - f_k||_m^2 / (2 tau).

    Quadratic backend: one pre-factorized sparse solve per step (the inner
    residual is the linear-system defect).  Slope backend: one ADMM prox
    per step; raises ProxNoConvergence with the failing step index.
    Mass is conserved and the maximum principle holds along the way.
    """
    if not tau > 0:
        raise ParseError(f"tau must be positive, got {tau!r}")
    backend = backend.bind(f0.space)
    space = f0.space
    density = isinstance(f0, DensityField)
    fields = [f0]
    meta = []
    current = f0.values
    if backend.kind == "quadratic":
        solver = heat_step_solver(backend, tau)
        from .calculus import _laplace_operator

        A = _laplace_operator(backend)
        for _ in range(steps):
            nxt = solver.solve(current)
            resid = float(np.max(np.abs(nxt + tau * (A @ nxt) - current)))
            e_prev = _energy_quad(backend, current)
            e_next = _energy_quad(backend, nxt)
            meta.append(
                {"inner_iterations": 1, "inner_residual": resid,
                 "objective_decrease": e_prev - e_next}
            )
            current = nxt
            fields.append(_as_density(space, current) if density
                          else ScalarField(space, current))
    else:
        for k in range(steps):
            fk = ScalarField(space, current)
            try:
                g, resid, iters = slope_prox(fk, backend, tau)
            except ProxNoConvergence as exc:
                raise ProxNoConvergence(exc.residual, step=k) from exc
            if resid > 1e-10:
                raise ProxNoConvergence(resid, step=k)
            e_prev = cheeger_energy(fk, backend)
            e_next = cheeger_energy(g, backend)
            meta.append(
                {"inner_iterations": iters, "inner_residual": resid,
                 "objective_decrease": e_prev - e_next}
            )
            current = g.values
            fields.append(_as_density(space, current) if density
                          else ScalarField(space, current))
    times = [tau * k for k in range(steps + 1)]
    return Trajectory(times, fields, meta, "l2_heat")


def _energy_quad(backend, values):
    e = values[backend.rows] - values[backend.cols]
    return 0.5 * float(np.sum(backend.weights * e * e))


# -- JKO ------------------------------------------------------------------------


class JKOConfig:
    """Inner-solver knobs for one JKO step.

    The step problem  min_{gamma >= 0, gamma 1 = a}  <d^2, gamma>/(2 tau)
    + Ent(gamma^T 1 | m)  is solved under entropic regularization eps,
    annealed from eps_start down to eps_min (factor `anneal` each level,
    dual variables warm-started).  Updates are exact coordinate
    maximizations of the smooth dual, so each level converges linearly.

    eps_min defaults to grid_floor * mesh^2 / tau on meshed spaces: below
    that floor the coupling kernel is narrower than a grid cell and the
    discrete flow freezes (sub-cell displacements cost h * delta instead
    of delta^2), while at the floor the regularization blurs at the cell
    scale and the bias halves whenever (tau, h) halve.
    """

    def __init__(self, eps_min=None, eps_start=None, anneal=0.25, grid_floor=1.0,
                 level_tol=1e-10, max_iter_per_level=20_000, kkt_tol=1e-6):
        self.eps_min = eps_min
        self.eps_start = eps_start
        self.anneal = anneal
        self.grid_floor = grid_floor
        self.level_tol = level_tol
        self.max_iter_per_level = max_iter_per_level
        self.kkt_tol = kkt_tol

    def resolve_eps_min(self, space, tau, cmax):
        if self.eps_min is not None:
            return self.eps_min
        if space.mesh is not None:
            return max(self.grid_floor * space.mesh**2 / tau, 1e-12)
        return max(1e-3 * cmax, 1e-12)


def _jko_step(space, a, tau, cfg):
    """One minimizing-movement step; returns (b_masses, meta)."""
    c = space.dist_sq / (2.0 * tau)
    cmax = float(c.max())
    eps_start = cfg.eps_start if cfg.eps_start is not None else max(cmax / 8.0, 1e-12)
    eps_min = cfg.resolve_eps_min(space, tau, cmax)
    m = space.measure
    log_m = np.log(m)
    with np.errstate(divide="ignore"):
        log_a = np.log(a)
    finite = np.isfinite(log_a)

    phi = np.zeros(space.n)
    g = np.zeros(space.n)
    eps_levels = []
    eps = eps_start
    while eps > eps_min:
        eps_levels.append(eps)
        eps *= cfg.anneal
    eps_levels.append(eps_min)

    total_iters = 0
    delta = np.inf
    for eps in eps_levels:
        for _ in range(cfg.max_iter_per_level):
            total_iters += 1
            phi_new = eps * (log_a - logsumexp((g[None, :] - c) / eps, axis=1))
            log_T = logsumexp((phi_new[:, None] - c) / eps, axis=0)
            g_new = eps * (log_m - log_T - 1.0) / (eps + 1.0)
            delta = max(
                float(np.max(np.abs(phi_new[finite] - phi[finite]), initial=0.0)),
                float(np.max(np.abs(g_new - g))),
            )
            phi, g = phi_new, g_new
            if delta <= cfg.level_tol * (1.0 + eps):
                break

    eps = eps_levels[-1]
    phi = eps * (log_a - logsumexp((g[None, :] - c) / eps, axis=1))
    log_gamma = (phi[:, None] + g[None, :] - c) / eps
    b = np.exp(logsumexp(log_gamma, axis=0))

    # complementarity gap of the *unregularized* KKT system; O(eps_min) by
    # design, reported alongside the regularized fixed-point residual
    with np.errstate(divide="ignore"):
        rho = c + (np.log(b) - log_m)[None, :] + 1.0
    lam = rho.min(axis=1)
    gamma = np.exp(log_gamma)
    kkt = float(np.sum(gamma * (rho - lam[:, None])))
    return b, {"inner_iterations": total_iters, "inner_residual": delta,
               "kkt_unregularized": kkt, "eps_final": eps}


def jko_flow(mu0, tau, steps, inner=None):
    """Minimizing movement for Ent(.|m) in (P(X), W2) from mu0.

    mu_{k+1} = argmin_nu Ent(nu|m) + W2^2(nu, mu_k) / (2 tau); the entropy
    is nonincreasing along the slices by minimality.
    """
    if not tau > 0:
        raise ParseError(f"tau must be positive, got {tau!r}")
    cfg = inner or JKOConfig()
    space = mu0.space
    fields = [mu0]
    meta = []
    a = mu0.masses()
    ent_prev = entropy(mu0)
    for k in range(steps):
        b, info = _jko_step(space, a, tau, cfg)
        if not np.all(np.isfinite(b)) or info["inner_residual"] > cfg.kkt_tol:
            raise InnerSolverFailure(k, info["inner_residual"])
        nxt = _as_density(space, b / space.measure)
        ent_next = entropy(nxt)
        info["objective_decrease"] = ent_prev - ent_next
        meta.append(info)
        fields.append(nxt)
        a = nxt.masses()
        ent_prev = ent_next
    times = [tau * k for k in range(steps + 1)]
    return Trajectory(times, fields, meta, "jko_entropy")


# -- along-the-flow quantities ----------------------------------------------------


def metric_speed(traj, metric=None):
    """Per-step speeds; W2 quotients for entropy flows, L2(m) for heat flows
    (override with metric='w2' or 'l2')."""
    if traj.n_steps < 1:
        raise DimensionMismatch("trajectory needs at least one step")
    if metric is None:
        metric = "w2" if traj.flow_kind == "jko_entropy" else "l2"
    out = []
    for k in range(traj.n_steps):
        dt = traj.times[k + 1] - traj.times[k]
        if metric == "w2":
            dist = math.sqrt(max(w2_cost(traj.fields[k], traj.fields[k + 1]), 0.0))
        else:
            diff = traj.fields[k + 1].values - traj.fields[k].values
            dist = math.sqrt(float((diff * diff) @ traj.space.measure))
        out.append(dist / dt)
    return out


def fisher_information(mu, backend=None):
    """int slope(f)^2 / f dm, with zero-mass points contributing 0.

    Points where the density vanishes are excluded (the 0 * log 0 school
    of conventions); the sqrt-form 4 C(sqrt f) stays finite there and the
    gap between the two is the reported identity residual.
    """
    space = mu.space
    if backend is None:
        backend = EnergyBackend("slope", radius=None)
    gamma = carre_du_champ(mu, backend.bind(space))
    f = mu.values
    pos = f > 0
    return float(np.sum(gamma[pos] / f[pos] * space.measure[pos]))


def fisher_sqrt_form(mu, backend=None):
    """4 C(sqrt f): the right-hand side of the Fisher identity."""
    space = mu.space
    if backend is None:
        backend = EnergyBackend("slope", radius=None)
    root = ScalarField(space, np.sqrt(mu.values))
    return 4.0 * cheeger_energy(root, backend.bind(space))


def entropy_along(traj):
    return [entropy(f) for f in traj.fields]


def fisher_along(traj, backend=None):
    """(fisher values, |quotient-form - sqrt-form| identity residuals)."""
    vals = [fisher_information(f, backend) for f in traj.fields]
    resid = [abs(v - fisher_sqrt_form(f, backend)) for v, f in zip(vals, traj.fields)]
    return vals, resid


# -- persistence -------------------------------------------------------------------

_FMT = "%.17g"


def save_trajectory(traj, directory):
    """meta.json + slice_k.csv, written eagerly so diagnostics can re-read."""
    os.makedirs(directory, exist_ok=True)
    meta = {
        "flow_kind": traj.flow_kind,
        "times": [float(t) for t in traj.times],
        "density": traj.is_density(),
        "step_meta": traj.step_meta,
        "n": traj.space.n,
    }
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for k, f in enumerate(traj.fields):
        save_field(f, os.path.join(directory, f"slice_{k}.csv"))


def load_trajectory(directory, space):
    path = os.path.join(directory, "meta.json")
    with open(path) as fh:
        meta = json.load(fh)
    if meta["n"] != space.n:
        raise DimensionMismatch(f"trajectory has n={meta['n']}, space has n={space.n}")
    fields = [
        load_field(os.path.join(directory, f"slice_{k}.csv"), space,
                   density=meta["density"])
        for k in range(len(meta["times"]))
    ]
    return Trajectory(meta["times"], fields, meta["step_meta"], meta["flow_kind"])
