"""Exception types shared across the package."""


class BundlePoseError(Exception):
    """Base class for all errors raised by this package."""


class NonPositiveDepth(BundlePoseError):
    """A point lies at or behind the camera plane (Z too small)."""


class EmptyRender(BundlePoseError):
    """Rasterization covered no pixel; the object is out of view."""


class DimensionMismatch(BundlePoseError):
    """Two images that must share a shape do not."""


class DisconnectedSceneGraph(BundlePoseError):
    """A view shares no object with the rest of the scene."""


class SingularNormalEquations(BundlePoseError):
    """The Gauss-Newton normal equations are rank deficient."""


class NoVisibleObjects(BundlePoseError):
    """The scene has no visible (view, object) pair to optimize."""


class EmptyPointSet(BundlePoseError):
    """A metric was asked to average over zero model points."""


class EmptyErrorList(BundlePoseError):
    """A score was requested for an empty error list."""


class LengthMismatch(BundlePoseError):
    """Paired error lists differ in length."""


class FrameCountMismatch(BundlePoseError):
    """A tracker stream produced the wrong number of frames."""


class SceneTooShort(BundlePoseError):
    """A scene has too few frames to host any subsequence."""


class EmptyRecords(BundlePoseError):
    """Aggregation was requested over zero per-frame records."""


class DegenerateSpec(BundlePoseError):
    """A synthetic scene specification with zero objects or views."""
