"""Finite metric measure spaces: construction, validation, grid generators, file I/O.

A space is a point set {0..n-1} with a dense symmetric distance matrix, a
fully supported probability measure, an optional per-pair geodesic hint
(ordered point lists approximating geodesics) and an optional sampling
scale ``mesh`` that downstream modules use as the default slope radius.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    AsymmetricDistance,
    NonNormalizedMeasure,
    ParseError,
    TriangleViolation,
    ZeroMass,
)
from .rng import SplitMix64

MEASURE_TOL = 1e-12
_TRIANGLE_FULL_SCAN_MAX = 200
_VALIDATION_SEED = 0xA11CE


class MetricMeasureSpace:
    """Immutable (X, d, m) on n points.

    Attributes
    ----------
    n : int
    dist : (n, n) float array, read-only
    measure : (n,) float array, read-only, positive, sums to 1
    mesh : float or None
        Sampling scale h of the generator that produced the space.
    """

    def __init__(self, dist, measure, geodesic_hint=None, mesh=None, validate=True):
        dist = np.ascontiguousarray(dist, dtype=np.float64)
        measure = np.ascontiguousarray(measure, dtype=np.float64)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise ParseError(f"dist must be square, got shape {dist.shape}")
        if measure.shape != (dist.shape[0],):
            raise ParseError(
                f"measure length {measure.shape} does not match n={dist.shape[0]}"
            )
        self.n = dist.shape[0]
        self.dist = dist
        self.measure = measure
        self.mesh = None if mesh is None else float(mesh)
        self._hints = geodesic_hint  # dict[(i, j) with i < j] -> tuple of indices
        self._dist_sq = None
        self.dist.flags.writeable = False
        self.measure.flags.writeable = False
        if validate:
            self._validate()

    # -- validation ---------------------------------------------------------

    def _validate(self):
        d, n = self.dist, self.n
        if not np.all(np.isfinite(d)):
            raise ParseError("dist contains non-finite entries")
        if np.any(np.diag(d) != 0.0):
            i = int(np.argmax(np.diag(d) != 0.0))
            raise ParseError(f"dist[{i}][{i}] must be 0")
        asym = np.argwhere(d != d.T)
        if asym.size:
            i, j = (int(v) for v in asym[0])
            raise AsymmetricDistance(i, j)
        offdiag = ~np.eye(n, dtype=bool)
        nonpos = (d <= 0.0) & offdiag
        if nonpos.any():
            i, j = (int(v) for v in np.argwhere(nonpos)[0])
            raise ParseError(f"dist[{i}][{j}] must be positive for i != j")

        total = float(np.sum(self.measure))
        if abs(total - 1.0) > MEASURE_TOL:
            raise NonNormalizedMeasure(total)
        if np.any(self.measure <= 0.0):
            raise ZeroMass(int(np.argmax(self.measure <= 0.0)))

        tol = 1e-12 * max(1.0, float(d.max()))
        if n <= _TRIANGLE_FULL_SCAN_MAX:
            for j in range(n):
                bad = d > d[:, j, None] + d[None, j, :] + tol
                if bad.any():
                    i, k = (int(v) for v in np.argwhere(bad)[0])
                    raise TriangleViolation(i, k, j)
        else:
            rng = SplitMix64(_VALIDATION_SEED)
            for _ in range(_TRIANGLE_FULL_SCAN_MAX**2):
                i = rng.randint(0, n - 1)
                j = rng.randint(0, n - 1)
                k = rng.randint(0, n - 1)
                if d[i, k] > d[i, j] + d[j, k] + tol:
                    raise TriangleViolation(i, k, j)

        if self._hints:
            self._validate_hints()

    def _validate_hints(self, max_pairs=10_000):
        if self.mesh is None:
            raise ParseError("geodesic hints require a mesh scale")
        d, h = self.dist, self.mesh
        keys = list(self._hints)
        if len(keys) > max_pairs:
            rng = SplitMix64(_VALIDATION_SEED)
            keys = [keys[rng.randint(0, len(keys) - 1)] for _ in range(max_pairs)]
        for (i, j) in keys:
            path = self._hints[(i, j)]
            if path[0] != i or path[-1] != j:
                raise ParseError(f"geodesic hint for ({i},{j}) must start at {i} and end at {j}")
            bound = d[i, j] * (1.0 + h) + 1e-12
            for p, q in zip(path[:-1], path[1:]):
                if d[i, p] + d[p, q] + d[q, j] > bound:
                    raise ParseError(
                        f"geodesic hint for ({i},{j}) detours too far through ({p},{q})"
                    )

    # -- accessors ----------------------------------------------------------

    @property
    def dist_sq(self):
        if self._dist_sq is None:
            dsq = self.dist * self.dist
            dsq.flags.writeable = False
            self._dist_sq = dsq
        return self._dist_sq

    @property
    def diameter(self):
        return float(self.dist.max())

    @property
    def has_geodesic_hints(self):
        return bool(self._hints)

    def geodesic_hint(self, i, j):
        """Ordered point path from i to j (endpoints included), or None."""
        if not self._hints:
            return None
        if i == j:
            return (i,)
        key = (i, j) if i < j else (j, i)
        path = self._hints.get(key)
        if path is None:
            return None
        return path if i < j else tuple(reversed(path))

    def hint_pairs(self):
        return self._hints.keys() if self._hints else ()

    def __eq__(self, other):
        if not isinstance(other, MetricMeasureSpace):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.dist, other.dist)
            and np.array_equal(self.measure, other.measure)
            and self.mesh == other.mesh
        )

    def __hash__(self):
        return id(self)

    def __repr__(self):
        tags = []
        if self.mesh is not None:
            tags.append(f"mesh={self.mesh:g}")
        if self.has_geodesic_hints:
            tags.append("geodesic")
        extra = (", " + ", ".join(tags)) if tags else ""
        return f"MetricMeasureSpace(n={self.n}{extra})"


def make_space(dist, measure):
    """Validate raw distance/measure data into a space (no geodesic hints)."""
    return MetricMeasureSpace(dist, measure)


def gen_circle_grid(n, norm_exponent=2):
    """n equispaced points on the circle of unit circumference.

    Distance is shorter-arc length, the measure is uniform, mesh h = 1/n,
    and geodesic hints list the grid points along the shorter arc
    (antipodal ties resolved through the lower-index arc).
    """
    if n < 3:
        raise ParseError(f"circle grid needs n >= 3, got {n}")
    if norm_exponent != 2:
        raise ParseError(f"only norm_exponent=2 is supported, got {norm_exponent}")
    idx = np.arange(n)
    arc = np.abs(idx[:, None] - idx[None, :])
    arc = np.minimum(arc, n - arc)
    dist = arc / n
    measure = np.full(n, 1.0 / n)

    hints = {}
    for i in range(n):
        for j in range(i + 1, n):
            fwd = j - i
            bwd = n - fwd
            if fwd < bwd:
                path = tuple(range(i, j + 1))
            elif bwd < fwd:
                path = tuple(k % n for k in range(i, i - bwd - 1, -1))
            else:
                up = tuple(range(i, j + 1))
                down = tuple(k % n for k in range(i, i - bwd - 1, -1))
                path = up if min(up[1:-1]) < min(down[1:-1]) else down
            hints[(i, j)] = path
    return MetricMeasureSpace(dist, measure, geodesic_hint=hints, mesh=1.0 / n)


def _snap_unit(x, side):
    """Nearest grid index for coordinate x in [0,1]; exact .5 ties go down."""
    t = x * (side - 1)
    k = int(np.floor(t + 0.5))
    if k - t == 0.5:
        k -= 1
    return min(max(k, 0), side - 1)


def gen_box_grid(side, norm="euclidean"):
    """side x side grid in the unit square under the euclidean or linf norm.

    Point (r, c) sits at (c, r)/(side-1) and has flat index r*side + c.
    Geodesic hints snap the straight segment for the euclidean norm and
    follow a coordinate-monotone staircase (an exact geodesic) for linf.
    """
    if side < 2:
        raise ParseError(f"box grid needs side >= 2, got {side}")
    if norm not in ("euclidean", "linf"):
        raise ParseError(f"unknown norm {norm!r}")
    h = 1.0 / (side - 1)
    rr, cc = np.divmod(np.arange(side * side), side)
    xs = cc * h
    ys = rr * h
    dx = np.abs(xs[:, None] - xs[None, :])
    dy = np.abs(ys[:, None] - ys[None, :])
    if norm == "euclidean":
        dist = np.hypot(dx, dy)
    else:
        dist = np.maximum(dx, dy)
    n = side * side
    measure = np.full(n, 1.0 / n)

    hints = {}
    for i in range(n):
        ri, ci = divmod(i, side)
        for j in range(i + 1, n):
            rj, cj = divmod(j, side)
            if norm == "linf":
                path = [i]
                r, c = ri, ci
                while (r, c) != (rj, cj):
                    r += (rj > r) - (rj < r)
                    c += (cj > c) - (cj < c)
                    path.append(r * side + c)
                hints[(i, j)] = tuple(path)
            else:
                hints[(i, j)] = _segment_hint(dist, side, h, i, j, ri, ci, rj, cj)
    return MetricMeasureSpace(dist, measure, geodesic_hint=hints, mesh=h)


def _segment_hint(dist, side, h, i, j, ri, ci, rj, cj):
    """Straight-segment snapping, filtered so every kept point stays within
    the (1 + h) detour band the hint contract promises."""
    steps = max(abs(ri - rj), abs(ci - cj))
    d = dist[i, j]
    band = d * (1.0 + h)
    path = [i]
    for k in range(1, steps):
        s = k / steps
        x = (ci + s * (cj - ci)) * h
        y = (ri + s * (rj - ri)) * h
        p = _snap_unit(y, side) * side + _snap_unit(x, side)
        if p == path[-1] or p == j:
            continue
        prev = path[-1]
        if dist[i, prev] + dist[prev, p] + dist[p, j] <= band:
            path.append(p)
    path.append(j)
    # drop any point whose removal is needed to honor the detour band
    out = [path[0]]
    for q in path[1:]:
        while len(out) > 1 and dist[i, out[-1]] + dist[out[-1], q] + dist[q, j] > band:
            out.pop()
        out.append(q)
    return tuple(out)


# -- file format ------------------------------------------------------------

_FMT = "%.17g"


def save_space(space, path):
    """Write the structured-text space file (17 significant digits)."""
    lines = [f"n {space.n}"]
    if space.mesh is not None:
        lines.append("mesh " + _FMT % space.mesh)
    lines.append("dist")
    for row in space.dist:
        lines.append(" ".join(_FMT % v for v in row))
    lines.append("measure")
    for v in space.measure:
        lines.append(_FMT % v)
    if space.has_geodesic_hints:
        lines.append("geodesic")
        for (i, j) in sorted(space.hint_pairs()):
            hint = space.geodesic_hint(i, j)
            lines.append(f"{i} {j} " + ",".join(str(p) for p in hint))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_space(path):
    with open(path) as fh:
        raw = [ln.rstrip("\n") for ln in fh]
    lines = [(k + 1, ln.strip()) for k, ln in enumerate(raw) if ln.strip()]
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("unexpected end of file", line=len(raw))
        item = lines[pos]
        pos += 1
        return item

    lno, header = take()
    parts = header.split()
    if len(parts) != 2 or parts[0] != "n":
        raise ParseError("expected header 'n <count>'", line=lno, field="n")
    try:
        n = int(parts[1])
    except ValueError:
        raise ParseError(f"bad point count {parts[1]!r}", line=lno, field="n") from None

    mesh = None
    lno, nxt = take()
    if nxt.startswith("mesh"):
        parts = nxt.split()
        try:
            mesh = float(parts[1])
        except (IndexError, ValueError):
            raise ParseError("bad mesh line", line=lno, field="mesh") from None
        lno, nxt = take()
    if nxt != "dist":
        raise ParseError("expected 'dist' block", line=lno, field="dist")

    dist = np.empty((n, n))
    for r in range(n):
        lno, row = take()
        vals = row.split()
        if len(vals) != n:
            raise ParseError(
                f"dist row {r} has {len(vals)} entries, expected {n}", line=lno, field="dist"
            )
        try:
            dist[r] = [float(v) for v in vals]
        except ValueError:
            raise ParseError(f"bad number in dist row {r}", line=lno, field="dist") from None

    lno, nxt = take()
    if nxt != "measure":
        raise ParseError("expected 'measure' block", line=lno, field="measure")
    measure = np.empty(n)
    for r in range(n):
        lno, row = take()
        try:
            measure[r] = float(row)
        except ValueError:
            raise ParseError(f"bad number in measure entry {r}", line=lno, field="measure") from None

    hints = None
    if pos < len(lines):
        lno, nxt = take()
        if nxt != "geodesic":
            raise ParseError(f"unexpected block {nxt!r}", line=lno)
        hints = {}
        while pos < len(lines):
            lno, row = take()
            parts = row.split()
            if len(parts) != 3:
                raise ParseError("geodesic line must be 'i j p1,p2,...'", line=lno, field="geodesic")
            try:
                i, j = int(parts[0]), int(parts[1])
                path = tuple(int(p) for p in parts[2].split(","))
            except ValueError:
                raise ParseError("bad geodesic entry", line=lno, field="geodesic") from None
            hints[(i, j) if i < j else (j, i)] = path if i < j else tuple(reversed(path))

    return MetricMeasureSpace(dist, measure, geodesic_hint=hints, mesh=mesh)
