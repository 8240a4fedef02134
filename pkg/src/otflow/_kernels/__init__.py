"""Kernel backend selection.

The compiled extension (``_core``) is preferred when it built; the numpy
fallback implements the same algorithms with the same pivot rules, so
results agree between backends.  Set ``OTFLOW_PURE_PYTHON=1`` to force
the fallback (used by the benchmark and the parity tests).
"""

import os

from . import _fallback

if os.environ.get("OTFLOW_PURE_PYTHON"):
    impl = _fallback
else:
    try:
        from . import _core as impl  # type: ignore[attr-defined]
    except ImportError:
        impl = _fallback

BACKEND = impl.BACKEND_NAME

transport_simplex = impl.transport_simplex
hopf_lax_eval = impl.hopf_lax_eval
slope_max_quotient = impl.slope_max_quotient
