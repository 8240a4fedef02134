"""Reproducible space -> fields -> flow -> diagnostics pipelines.

A run is described by a flat dotted-key config file, executes
deterministically from its seed, and leaves behind a manifest listing
every artifact with a content digest.  Wall-clock timings go to a
separate timings.json so that manifests of identical runs are
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import time

from . import __version__
from .calculus import quadratic_backend, slope_backend
from .diagnostics import (
    brenier_check,
    displacement_convexity_check,
    dw2_heatflow_check,
    ede_nonuniqueness_demo,
    ede_residual,
    evi_residual,
    kuwada_check,
    quadraticity_check,
    random_density,
)
from .errors import ConfigError, OtflowError
from .fields import preset_field, save_field
from .flows import JKOConfig, heat_flow, jko_flow, save_trajectory
from .mmspace import gen_box_grid, gen_circle_grid, load_space, save_space
from .report import DiagnosticsReport
from .rng import SplitMix64

_FIELD_KEYS = ("kind", "k", "amplitude", "center", "width", "at", "value", "density")


class RunConfig:
    """Parsed, validated run description."""

    def __init__(self, entries, base_dir="."):
        self.entries = dict(entries)
        self.base_dir = base_dir
        self.seed = int(self.get("seed", 0))
        self.out = self.get("out", None)
        if self.out is None:
            raise ConfigError("config needs an 'out' directory")
        self.out = os.path.join(base_dir, str(self.out))
        self._validate()

    def get(self, key, default=None):
        return self.entries.get(key, default)

    def _validate(self):
        kind = self.get("space.kind")
        if kind not in ("circle", "box", "file"):
            raise ConfigError(f"space.kind must be circle, box or file, got {kind!r}")
        if kind == "file":
            path = self.get("space.file")
            if not path or not os.path.exists(os.path.join(self.base_dir, str(path))):
                raise ConfigError(f"space.file does not exist: {path!r}")
        flow_kind = self.get("flow.kind", "none")
        if flow_kind not in ("heat", "jko", "both", "none"):
            raise ConfigError(f"flow.kind must be heat, jko, both or none, got {flow_kind!r}")
        for name in self._diag_names():
            if name not in ("ede", "evi", "kuwada", "brenier", "quadraticity",
                            "convexity", "horver", "dw2", "ede-demo", "flow-compare"):
                raise ConfigError(f"unknown diagnostic {name!r}")

    def _diag_names(self):
        raw = self.get("diag.list", "")
        return [s.strip() for s in str(raw).split(",") if s.strip()]


def parse_config(path):
    """Flat dotted-key file: 'key = value' lines, '#' comments."""
    entries = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            entries[key.strip()] = _coerce(value.strip())
    return RunConfig(entries, base_dir=os.path.dirname(os.path.abspath(path)))


def _coerce(text):
    low = text.lower()
    if low in ("true", "yes"):
        return True
    if low in ("false", "no"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _build_space(cfg):
    kind = cfg.get("space.kind")
    if kind == "circle":
        return gen_circle_grid(int(cfg.get("space.n", 64)))
    if kind == "box":
        return gen_box_grid(int(cfg.get("space.side", 9)),
                            str(cfg.get("space.norm", "euclidean")))
    return load_space(os.path.join(cfg.base_dir, str(cfg.get("space.file"))))


def _build_field(cfg, prefix, space, default_kind=None, density=True):
    kind = cfg.get(f"{prefix}.kind", default_kind)
    if kind is None:
        return None
    params = {}
    for key in _FIELD_KEYS:
        val = cfg.get(f"{prefix}.{key}")
        if val is not None and key not in ("kind", "density"):
            params[key] = val
    density = bool(cfg.get(f"{prefix}.density", density))
    return preset_field(str(kind), params, space, density=density)


def run_pipeline(config):
    """Execute a RunConfig; returns (exit_code, manifest_path).

    Exit 0 iff every requested diagnostic passes; module errors surface
    as exit 1 with the failing stage named; ConfigError is raised before
    any artifact is written (the CLI maps it to exit 2).
    """
    t_start = time.time()
    os.makedirs(config.out, exist_ok=True)
    artifacts = {}
    reports = {}
    timings = {}
    rng = SplitMix64(config.seed)

    def record(path):
        artifacts[os.path.relpath(path, config.out)] = _sha256(path)

    stage = "space"
    try:
        t0 = time.time()
        space = _build_space(config)
        space_path = os.path.join(config.out, "space.txt")
        save_space(space, space_path)
        record(space_path)
        timings["space"] = time.time() - t0

        stage = "fields"
        t0 = time.time()
        f0 = _build_field(config, "field.f0", space, default_kind="cosine_mode")
        fields = {"f0": f0}
        for name, field in fields.items():
            if field is None:
                continue
            path = os.path.join(config.out, f"{name}.csv")
            save_field(field, path)
            record(path)
        timings["fields"] = time.time() - t0

        stage = "flow"
        t0 = time.time()
        tau = float(config.get("flow.tau", space.mesh**2 if space.mesh else 1e-3))
        steps = int(config.get("flow.steps", 10))
        backend_name = str(config.get("flow.backend", "quadratic"))
        backend = quadratic_backend(space) if backend_name == "quadratic" else slope_backend()
        flow_kind = str(config.get("flow.kind", "none"))
        trajectories = {}
        if flow_kind in ("heat", "both"):
            traj = heat_flow(f0, backend, tau, steps)
            out_dir = os.path.join(config.out, "heat")
            save_trajectory(traj, out_dir)
            trajectories["heat"] = traj
            for fn in sorted(os.listdir(out_dir)):
                record(os.path.join(out_dir, fn))
        if flow_kind in ("jko", "both"):
            jko_tau = float(config.get("flow.jko_tau", tau))
            inner = JKOConfig(grid_floor=float(config.get("flow.jko_grid_floor", 0.5)))
            traj = jko_flow(f0, jko_tau, int(config.get("flow.jko_steps", steps)), inner=inner)
            out_dir = os.path.join(config.out, "jko")
            save_trajectory(traj, out_dir)
            trajectories["jko"] = traj
            for fn in sorted(os.listdir(out_dir)):
                record(os.path.join(out_dir, fn))
        timings["flow"] = time.time() - t0

        stage = "diagnostics"
        t0 = time.time()
        C = float(config.get("diag.C", 2.0))
        K = float(config.get("diag.K", 0.0))
        for name in config._diag_names():
            rep = _run_diagnostic(name, config, space, fields, trajectories, rng, C, K)
            path = os.path.join(config.out, f"report_{name.replace('-', '_')}.json")
            rep.write(path)
            record(path)
            reports[name] = {"path": os.path.relpath(path, config.out), "pass": rep.passed}
        timings["diagnostics"] = time.time() - t0
    except ConfigError:
        raise
    except OtflowError as exc:
        manifest = {
            "config": {k: config.entries[k] for k in sorted(config.entries)},
            "seed": config.seed,
            "version": __version__,
            "error": {"stage": stage, "message": str(exc)},
            "artifacts": artifacts,
            "reports": reports,
        }
        manifest_path = os.path.join(config.out, "manifest.json")
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return 1, manifest_path

    ok = all(r["pass"] for r in reports.values())
    manifest = {
        "config": {k: config.entries[k] for k in sorted(config.entries)},
        "seed": config.seed,
        "version": __version__,
        "artifacts": artifacts,
        "reports": reports,
        "all_pass": ok,
    }
    manifest_path = os.path.join(config.out, "manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    timings["total"] = time.time() - t_start
    with open(os.path.join(config.out, "timings.json"), "w") as fh:
        json.dump(timings, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return (0 if ok else 1), manifest_path


def _probe_pool(space, rng, count):
    return [random_density(space, rng) for _ in range(count)]


def _run_diagnostic(name, config, space, fields, trajectories, rng, C, K):
    f0 = fields.get("f0")
    if name == "ede":
        return ede_residual(_need(trajectories, "jko", name), C=C)
    if name == "kuwada":
        return kuwada_check(_need(trajectories, "heat", name), C=C)
    if name == "evi":
        probes = _probe_pool(space, rng, int(config.get("diag.probes", 3)))
        traj = trajectories.get("jko") or _need(trajectories, "heat", name)
        return evi_residual(traj, probes, K=K, C=C)
    if name == "brenier":
        nu = _build_field(config, "field.nu", space, default_kind="bump")
        return brenier_check(f0, nu, C=C)
    if name == "quadraticity":
        g = _build_field(config, "field.g", space, default_kind="cosine_mode",
                         density=False)
        import numpy as np

        from .fields import ScalarField

        probe_a = ScalarField(space, f0.values)
        return quadraticity_check(space, [probe_a, g], C=C)
    if name == "convexity":
        nu = _build_field(config, "field.nu", space, default_kind="bump")
        return displacement_convexity_check(
            f0, nu, K=K, slices=int(config.get("diag.slices", 9)), C=C
        )
    if name == "dw2":
        sigma = _build_field(config, "field.sigma", space, default_kind="constant")
        return dw2_heatflow_check(_need(trajectories, "heat", name), sigma, C=C)
    if name == "ede-demo":
        return ede_nonuniqueness_demo()
    if name == "horver":
        from .transport import geodesic_plan, kantorovich_potential

        nu = _build_field(config, "field.nu", space, default_kind="bump")
        plan = geodesic_plan(f0, nu, int(config.get("diag.slices", 5)))
        pot = kantorovich_potential(f0, nu)
        from .diagnostics import horizontal_vertical_check

        return horizontal_vertical_check(
            f0, pot.psi, plan, eps=float(config.get("diag.eps", 1e-2)), C=C
        )
    if name == "flow-compare":
        import numpy as np

        heat = _need(trajectories, "heat", name)
        jko = _need(trajectories, "jko", name)
        gaps = [
            float(np.abs(a.values - b.values) @ space.measure)
            for a, b in zip(heat.fields, jko.fields)
        ]
        tau = max(heat.times[1] - heat.times[0], jko.times[1] - jko.times[0])
        h = space.mesh if space.mesh is not None else space.diameter
        return DiagnosticsReport(
            "flow_compare",
            {"sup_l1_gap": max(gaps)},
            {"sup_l1_gap": float(config.get("diag.flow_gap_tol", C * (tau + h)))},
            context={"slices": len(gaps), "tau": tau, "h": h},
        )
    raise ConfigError(f"unknown diagnostic {name!r}")


def _need(trajectories, kind, diag):
    traj = trajectories.get(kind)
    if traj is None:
        raise ConfigError(f"diagnostic {diag!r} needs the {kind} flow (set flow.kind)")
    return traj
