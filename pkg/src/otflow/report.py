"""Named residual reports with tolerances and a derived pass flag."""

from __future__ import annotations

import json
import math
import os
import tempfile


class DiagnosticsReport:
    """Residuals keyed by label, each with a tolerance; pass iff all within.

    ``context`` records input digests and parameters so a report can be
    traced back to the run that produced it.
    """

    def __init__(self, name, residuals, tolerances, context=None):
        self.name = str(name)
        self.residuals = {str(k): float(v) for k, v in residuals.items()}
        self.tolerances = {str(k): float(v) for k, v in tolerances.items()}
        missing = set(self.residuals) - set(self.tolerances)
        if missing:
            raise ValueError(f"residuals without tolerances: {sorted(missing)}")
        self.context = dict(context or {})

    @property
    def passed(self):
        return all(
            not math.isnan(v) and v <= self.tolerances[k]
            for k, v in self.residuals.items()
        )

    def to_dict(self):
        return {
            "name": self.name,
            "residuals": self.residuals,
            "tolerances": self.tolerances,
            "pass": self.passed,
            "context": self.context,
        }

    def write(self, path):
        """Atomic write: temp file in the target directory, then rename."""
        payload = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(payload + "\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        return cls(data["name"], data["residuals"], data["tolerances"], data.get("context"))

    def __repr__(self):
        state = "pass" if self.passed else "FAIL"
        return f"DiagnosticsReport({self.name!r}, {state}, {len(self.residuals)} residuals)"
