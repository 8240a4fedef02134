"""otflow command line: space | hj | ot | calc | flow | diag | run.

All numeric output is printed with 17 significant digits; OTFLOW_THREADS
caps worker counts (the current solvers are single-threaded vectorized
code, so the cap is honored trivially).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .calculus import cheeger_energy, laplacian, parallelogram_defect, quadratic_backend, slope_backend
from .errors import ConfigError, OtflowError
from .fields import load_field, save_field
from .flows import JKOConfig, heat_flow, jko_flow, load_trajectory, save_trajectory
from .hopflax import hj_residuals
from .mmspace import gen_box_grid, gen_circle_grid, load_space, save_space
from .transport import (
    c_transform,
    geodesic_plan,
    kantorovich_potential,
    load_curve_plan,
    save_curve_plan,
    save_plan,
    w2_entropic,
    w2_exact,
)

_FMT = "%.17g"


def _num(x):
    return _FMT % float(x)


def _backend(space, name):
    return quadratic_backend(space) if name == "quadratic" else slope_backend()


def _add_space(sub):
    p = sub.add_parser("space", help="generate or validate spaces")
    s = p.add_subparsers(dest="action", required=True)
    g = s.add_parser("gen")
    g.add_argument("--kind", choices=["circle", "box"], required=True)
    g.add_argument("--n", type=int, help="point count (circle)")
    g.add_argument("--side", type=int, help="side length (box)")
    g.add_argument("--norm", choices=["euclidean", "linf"], default="euclidean")
    g.add_argument("--out", required=True)
    v = s.add_parser("validate")
    v.add_argument("file")


def _add_hj(sub):
    p = sub.add_parser("hj", help="Hopf-Lax semigroup checks")
    s = p.add_subparsers(dest="action", required=True)
    r = s.add_parser("run")
    r.add_argument("--space", required=True)
    r.add_argument("--f", required=True)
    r.add_argument("--t", type=float, required=True)
    r.add_argument("--dt", type=float)
    r.add_argument("--out", required=True)


def _add_ot(sub):
    p = sub.add_parser("ot", help="optimal transport")
    s = p.add_subparsers(dest="action", required=True)
    for name in ("w2", "potential", "geodesic"):
        q = s.add_parser(name)
        q.add_argument("--space", required=True)
        q.add_argument("--mu", required=True)
        q.add_argument("--nu", required=True)
        if name == "w2":
            q.add_argument("--exact", action="store_true", default=True)
            q.add_argument("--entropic", type=float, default=None, metavar="EPS")
            q.add_argument("--out")
        elif name == "potential":
            q.add_argument("--out")
        else:
            q.add_argument("--slices", type=int, default=5)
            q.add_argument("--out")


def _add_calc(sub):
    p = sub.add_parser("calc", help="slopes, energies, Laplacian")
    s = p.add_subparsers(dest="action", required=True)
    e = s.add_parser("energy")
    e.add_argument("--space", required=True)
    e.add_argument("--f", required=True)
    e.add_argument("--backend", choices=["slope", "quadratic"], default="slope")
    l = s.add_parser("laplacian")
    l.add_argument("--space", required=True)
    l.add_argument("--f", required=True)
    l.add_argument("--backend", choices=["slope", "quadratic"], default="quadratic")
    l.add_argument("--tau", type=float)
    l.add_argument("--out")
    g = s.add_parser("parallelogram")
    g.add_argument("--space", required=True)
    g.add_argument("--f", required=True)
    g.add_argument("--g", required=True)
    g.add_argument("--backend", choices=["slope", "quadratic"], default="slope")


def _add_flow(sub):
    p = sub.add_parser("flow", help="heat and JKO flows")
    s = p.add_subparsers(dest="action", required=True)
    h = s.add_parser("heat")
    h.add_argument("--space", required=True)
    h.add_argument("--f0", required=True)
    h.add_argument("--backend", choices=["slope", "quadratic"], default="quadratic")
    h.add_argument("--tau", type=float, required=True)
    h.add_argument("--steps", type=int, required=True)
    h.add_argument("--density", action="store_true")
    h.add_argument("--out", required=True)
    j = s.add_parser("jko")
    j.add_argument("--space", required=True)
    j.add_argument("--mu0", required=True)
    j.add_argument("--tau", type=float, required=True)
    j.add_argument("--steps", type=int, required=True)
    j.add_argument("--grid-floor", type=float, default=0.5)
    j.add_argument("--out", required=True)


def _add_diag(sub):
    p = sub.add_parser("diag", help="theorem residual checks")
    p.add_argument("action", choices=["ede", "evi", "kuwada", "brenier", "quadraticity",
                                      "convexity", "horver", "dw2", "ede-demo"])
    p.add_argument("--in", dest="indir")
    p.add_argument("--space")
    p.add_argument("--mu")
    p.add_argument("--nu")
    p.add_argument("--f")
    p.add_argument("--g")
    p.add_argument("--plan")
    p.add_argument("--sigma")
    p.add_argument("--probes")
    p.add_argument("--K", type=float, default=0.0)
    p.add_argument("--C", type=float, default=2.0)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--slices", type=int, default=9)
    p.add_argument("--out", required=True)


def _add_run(sub):
    p = sub.add_parser("run", help="run a config-driven pipeline")
    p.add_argument("--config", required=True)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="otflow")
    sub = parser.add_subparsers(dest="command", required=True)
    for add in (_add_space, _add_hj, _add_ot, _add_calc, _add_flow, _add_diag, _add_run):
        add(sub)
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OtflowError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


def _dispatch(args):
    if args.command == "space":
        return _cmd_space(args)
    if args.command == "hj":
        return _cmd_hj(args)
    if args.command == "ot":
        return _cmd_ot(args)
    if args.command == "calc":
        return _cmd_calc(args)
    if args.command == "flow":
        return _cmd_flow(args)
    if args.command == "diag":
        return _cmd_diag(args)
    if args.command == "run":
        from .pipeline import parse_config, run_pipeline

        code, manifest = run_pipeline(parse_config(args.config))
        print(manifest)
        return code
    raise ConfigError(f"unknown command {args.command!r}")


def _cmd_space(args):
    if args.action == "gen":
        if args.kind == "circle":
            if not args.n:
                raise ConfigError("circle grids need --n")
            space = gen_circle_grid(args.n)
        else:
            if not args.side:
                raise ConfigError("box grids need --side")
            space = gen_box_grid(args.side, args.norm)
        save_space(space, args.out)
        print(f"wrote {args.out} (n={space.n}, mesh={_num(space.mesh)})")
        return 0
    space = load_space(args.file)
    print(f"valid space: n={space.n}, diameter={_num(space.diameter)}")
    return 0


def _cmd_hj(args):
    space = load_space(args.space)
    f = load_field(args.f, space)
    rep = hj_residuals(f, args.t, dt=args.dt)
    rep.write(args.out)
    print(json.dumps(rep.to_dict(), indent=2, sort_keys=True))
    return 0 if rep.passed else 1


def _cmd_ot(args):
    space = load_space(args.space)
    mu = load_field(args.mu, space, density=True)
    nu = load_field(args.nu, space, density=True)
    if args.action == "w2":
        if args.entropic is not None:
            plan = w2_entropic(mu, nu, epsilon=args.entropic)
        else:
            plan = w2_exact(mu, nu)
        print(f"w2_squared {_num(plan.cost)}")
        print(f"w2 {_num(np.sqrt(max(plan.cost, 0.0)))}")
        if args.out:
            save_plan(plan, args.out)
        return 0
    if args.action == "potential":
        pot = kantorovich_potential(mu, nu)
        print(f"dual_value {_num(pot.dual_value(mu, nu))}")
        print(f"gap {_num(pot.gap)}")
        if args.out:
            save_field(pot.psi, args.out)
            save_field(pot.psi_c, args.out + ".ctransform")
        return 0
    cplan = geodesic_plan(mu, nu, args.slices + 1)
    print(f"action {_num(cplan.action())}")
    if args.out:
        save_curve_plan(cplan, args.out)
    return 0


def _cmd_calc(args):
    space = load_space(args.space)
    f = load_field(args.f, space)
    backend = _backend(space, args.backend)
    if args.action == "energy":
        print(f"cheeger_energy {_num(cheeger_energy(f, backend))}")
        return 0
    if args.action == "laplacian":
        lap = laplacian(f, backend, tau=args.tau)
        if args.out:
            save_field(lap, args.out)
        else:
            for v in lap.values:
                print(_num(v))
        return 0
    g = load_field(args.g, space)
    print(f"parallelogram_defect {_num(parallelogram_defect(f, g, backend))}")
    return 0


def _cmd_flow(args):
    space = load_space(args.space)
    if args.action == "heat":
        f0 = load_field(args.f0, space, density=args.density)
        traj = heat_flow(f0, _backend(space, args.backend), args.tau, args.steps)
    else:
        mu0 = load_field(args.mu0, space, density=True)
        traj = jko_flow(mu0, args.tau, args.steps,
                        inner=JKOConfig(grid_floor=args.grid_floor))
    save_trajectory(traj, args.out)
    print(f"wrote {args.out} ({traj.flow_kind}, {traj.n_steps} steps)")
    return 0


def _cmd_diag(args):
    from .diagnostics import (
        brenier_check,
        displacement_convexity_check,
        dw2_heatflow_check,
        ede_nonuniqueness_demo,
        ede_residual,
        evi_residual,
        horizontal_vertical_check,
        kuwada_check,
        quadraticity_check,
    )

    if args.action == "ede-demo":
        rep = ede_nonuniqueness_demo()
        rep.write(args.out)
        print(json.dumps(rep.to_dict(), indent=2, sort_keys=True))
        return 0 if rep.passed else 1

    if not args.space:
        raise ConfigError("this diagnostic needs --space")
    space = load_space(args.space)

    if args.action in ("ede", "evi", "kuwada", "dw2"):
        if not args.indir:
            raise ConfigError("trajectory diagnostics need --in DIR")
        traj = load_trajectory(args.indir, space)
        if args.action == "ede":
            rep = ede_residual(traj, C=args.C)
        elif args.action == "kuwada":
            rep = kuwada_check(traj, C=args.C)
        elif args.action == "dw2":
            sigma = load_field(args.sigma, space, density=True)
            rep = dw2_heatflow_check(traj, sigma, C=args.C)
        else:
            probes = _load_probes(args.probes, space)
            rep = evi_residual(traj, probes, K=args.K, C=args.C)
    elif args.action in ("brenier", "convexity"):
        mu = load_field(args.mu, space, density=True)
        nu = load_field(args.nu, space, density=True)
        if args.action == "brenier":
            rep = brenier_check(mu, nu, C=args.C)
        else:
            rep = displacement_convexity_check(mu, nu, K=args.K,
                                               slices=args.slices, C=args.C)
    elif args.action == "quadraticity":
        f = load_field(args.f, space)
        g = load_field(args.g, space)
        rep = quadraticity_check(space, [f, g], C=args.C)
    else:  # horver
        f = load_field(args.f, space)
        g = load_field(args.g, space)
        plan = load_curve_plan(args.plan, space)
        rep = horizontal_vertical_check(f, g, plan, eps=args.eps, C=args.C)

    rep.write(args.out)
    print(json.dumps(rep.to_dict(), indent=2, sort_keys=True))
    return 0 if rep.passed else 1


def _load_probes(path, space):
    from .fields import DensityField

    if not path:
        raise ConfigError("evi needs --probes FILE (one density per row)")
    probes = []
    with open(path) as fh:
        for line in fh:
            vals = [float(v) for v in line.split()]
            if vals:
                probes.append(DensityField(space, np.asarray(vals)))
    return probes


if __name__ == "__main__":
    sys.exit(main())
