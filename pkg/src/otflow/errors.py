"""Exception hierarchy shared by all otflow modules."""


class OtflowError(Exception):
    """Base class for all otflow errors."""


class ConfigError(OtflowError):
    """Invalid run configuration (missing file, unknown key, bad value)."""


class ParseError(OtflowError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field!r}")
        suffix = f" ({', '.join(loc)})" if loc else ""
        super().__init__(f"{message}{suffix}")


class AsymmetricDistance(OtflowError):
    def __init__(self, i, j):
        self.pair = (i, j)
        super().__init__(f"dist[{i}][{j}] != dist[{j}][{i}]")


class TriangleViolation(OtflowError):
    """Endpoints (i, k) violate the triangle inequality through midpoint j."""

    def __init__(self, i, k, j):
        self.triple = (i, k, j)
        super().__init__(f"triangle inequality fails: d({i},{k}) > d({i},{j}) + d({j},{k})")


class NonNormalizedMeasure(OtflowError):
    def __init__(self, total):
        self.total = total
        super().__init__(f"measure sums to {total!r}, expected 1 within 1e-12")


class ZeroMass(OtflowError):
    def __init__(self, i):
        self.index = i
        super().__init__(f"measure[{i}] must be positive (full support required)")


class NonPositiveTime(OtflowError):
    def __init__(self, t):
        self.t = t
        super().__init__(f"time must be positive, got {t!r}")


class DimensionMismatch(OtflowError):
    pass


class NoConvergence(OtflowError):
    """Iterative marginal solver hit max_iter; carries the last marginal error."""

    def __init__(self, max_iter, marginal_error):
        self.max_iter = max_iter
        self.marginal_error = marginal_error
        super().__init__(
            f"no convergence after {max_iter} iterations (marginal error {marginal_error:.3e})"
        )


class SolverFailure(OtflowError):
    pass


class AbsoluteContinuityViolation(OtflowError):
    def __init__(self, i):
        self.index = i
        super().__init__(f"mu has mass at point {i} outside the support of the plan's first marginal")


class NoGeodesicStructure(OtflowError):
    def __init__(self):
        super().__init__("space has no geodesic_hint; generate it with a grid generator")


class ProxNoConvergence(OtflowError):
    def __init__(self, residual, step=None):
        self.residual = residual
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"prox solver did not reach tolerance{where} (residual {residual:.3e})")


class InnerSolverFailure(OtflowError):
    def __init__(self, step, residual):
        self.step = step
        self.residual = residual
        super().__init__(f"inner solver failed at step {step} (residual {residual:.3e})")


class NotBoundedBelow(OtflowError):
    def __init__(self, minval):
        self.minval = minval
        super().__init__(f"density not bounded away from zero (min {minval:.3e} < 1e-8)")


class DegeneratePlan(OtflowError):
    pass


class UnknownPreset(OtflowError):
    def __init__(self, kind):
        self.kind = kind
        super().__init__(f"unknown field preset {kind!r}")
