"""otflow: optimal transport, Hopf-Lax semigroups and gradient flows on
finite metric measure spaces, with residual checks for the structural
identities connecting them (HJ sub/supersolutions, EDE/EVI, metric
Brenier, heat-flow/entropy-flow identification, quadraticity)."""

__version__ = "0.1.0"

from .fields import DensityField, ScalarField, preset_field
from .mmspace import MetricMeasureSpace, gen_box_grid, gen_circle_grid, load_space, make_space, save_space

__all__ = [
    "__version__",
    "MetricMeasureSpace",
    "make_space",
    "gen_circle_grid",
    "gen_box_grid",
    "load_space",
    "save_space",
    "ScalarField",
    "DensityField",
    "preset_field",
]
