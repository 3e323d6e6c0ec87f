"""Exception types shared across the toolkit."""


class FinslerError(Exception):
    """Base class for all toolkit errors."""


class ZeroVector(FinslerError):
    """A fiber evaluation was requested at y = 0."""


class OutOfChart(FinslerError):
    """A chart point lies outside the active (pinned) chart domain."""


class DegenerateMetric(FinslerError):
    """min-eigenvalue(g) fell below the degeneracy threshold.

    Flow drivers treat this as blow-up detection, not as a bug.
    """

    def __init__(self, min_eig, where=None):
        self.min_eig = float(min_eig)
        self.where = where
        loc = f" at {where}" if where is not None else ""
        super().__init__(f"metric degenerate (min eig {self.min_eig:.3e}){loc}")


class UnknownEntry(FinslerError):
    """Catalog lookup with an unknown structure name."""


class InvalidParams(FinslerError):
    """Catalog entry parameters violate the entry's validity conditions."""


class InvalidTime(FinslerError):
    """Rosenau family evaluated at t >= 0."""


class CollapsedMetric(FinslerError):
    """Einstein scaling requested past the collapse time (tau <= 0)."""


class BlowUp(FinslerError):
    """A flow update produced a nonpositive or non-finite F value."""

    def __init__(self, t, detail=""):
        self.t = float(t)
        super().__init__(f"flow blow-up at t = {self.t:.6g}" + (f": {detail}" if detail else ""))


class LeftChart(FinslerError):
    """A trajectory or pullback point left a pinned chart."""


class DegeneratePullback(FinslerError):
    """det(Dphi) <= 0: the sampled diffeomorphism is locally orientation-degenerate."""


class ConfigError(FinslerError):
    """Run configuration failed schema validation."""
