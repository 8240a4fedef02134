"""Scalar and density fields on a space, plus the deterministic field presets."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, ParseError, UnknownPreset

DENSITY_TOL = 1e-10


class ScalarField:
    """A real-valued function on the points of a space."""

    density = False

    def __init__(self, space, values):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != (space.n,):
            raise DimensionMismatch(
                f"field has {values.shape} values for a space with n={space.n}"
            )
        if not np.all(np.isfinite(values)):
            raise ParseError("field contains non-finite values")
        self.space = space
        self.values = values
        self.values.flags.writeable = False
        self._check()

    def _check(self):
        pass

    def integral(self):
        """Integral against the reference measure."""
        return float(self.values @ self.space.measure)

    def lipschitz(self):
        """Global Lipschitz constant max |f(x)-f(y)| / d(x,y)."""
        diff = np.abs(self.values[:, None] - self.values[None, :])
        d = self.space.dist
        mask = d > 0
        return float(np.max(diff[mask] / d[mask])) if mask.any() else 0.0

    def __repr__(self):
        return f"{type(self).__name__}(n={self.space.n})"


class DensityField(ScalarField):
    """Nonnegative field with unit integral: the density of mu = f m."""

    density = True

    def _check(self):
        if np.any(self.values < 0):
            raise ParseError("density values must be nonnegative")
        total = self.integral()
        if abs(total - 1.0) > DENSITY_TOL:
            raise ParseError(f"density integrates to {total!r}, expected 1 within 1e-10")

    def masses(self):
        """Per-point masses f_i * m_i (sum to 1)."""
        return self.values * self.space.measure


def same_space(*fields):
    space = fields[0].space
    for f in fields[1:]:
        if f.space is not space and f.space != space:
            raise DimensionMismatch("fields live on different spaces")
    return space


def _coordinate(space):
    """Canonical coordinate: arc position k/n on circle grids, first
    coordinate on box grids, index/n otherwise."""
    n = space.n
    if space.mesh is not None:
        side = int(round(1.0 / space.mesh)) + 1
        if side * side == n:  # box grid layout
            return (np.arange(n) % side) * space.mesh
    return np.arange(n) / n


def preset_field(kind, params, space, density=False):
    """Deterministic preset fields.

    kinds: constant, cosine_mode (k), bump (center, width), ramp,
    indicator (center, width), dirac_like (at).  Density variants are
    renormalized so that sum f*m = 1 exactly, adjusting the last entry
    with positive mass.
    """
    params = dict(params or {})
    x = _coordinate(space)
    n = space.n
    if kind == "constant":
        vals = np.full(n, float(params.get("value", 1.0)))
    elif kind == "cosine_mode":
        k = int(params.get("k", 1))
        amp = float(params.get("amplitude", 1.0))
        vals = 1.0 + amp * np.cos(2 * np.pi * k * x)
    elif kind == "bump":
        center = float(params.get("center", 0.5))
        width = float(params.get("width", 0.1))
        delta = np.abs(x - center)
        delta = np.minimum(delta, 1.0 - delta)  # wrap: x is periodic on circle grids
        vals = np.exp(-((delta / width) ** 2))
    elif kind == "ramp":
        vals = x.copy()
    elif kind == "indicator":
        center = float(params.get("center", 0.5))
        width = float(params.get("width", 0.25))
        delta = np.abs(x - center)
        delta = np.minimum(delta, 1.0 - delta)
        vals = (delta <= width / 2).astype(float)
    elif kind == "dirac_like":
        at = int(params.get("at", 0))
        vals = np.zeros(n)
        vals[at] = 1.0 / space.measure[at]
    else:
        raise UnknownPreset(kind)

    if not density:
        return ScalarField(space, vals)
    total = float(vals @ space.measure)
    if total <= 0:
        raise UnknownPreset(f"{kind} preset has zero mass, cannot normalize")
    vals = vals / total
    # pin the integral to 1 exactly by adjusting the last entry with mass
    resid = 1.0 - float(vals @ space.measure)
    last = int(np.max(np.nonzero(vals)[0]))
    vals[last] += resid / space.measure[last]
    return DensityField(space, vals)


_FMT = "%.17g"


def save_field(field, path):
    with open(path, "w") as fh:
        for v in field.values:
            fh.write(_FMT % v + "\n")


def load_field(path, space, density=False):
    vals = []
    with open(path) as fh:
        for k, ln in enumerate(fh):
            ln = ln.strip()
            if not ln:
                continue
            try:
                vals.append(float(ln))
            except ValueError:
                raise ParseError(f"bad number {ln!r}", line=k + 1) from None
    cls = DensityField if density else ScalarField
    return cls(space, np.asarray(vals))
