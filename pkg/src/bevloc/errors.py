"""Exception types shared across the pipeline."""


class BevlocError(Exception):
    """Base class for all pipeline errors."""


class MalformedXml(BevlocError):
    """OSM input is not parseable XML. Carries the byte offset when known."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class DanglingNodeRef(BevlocError):
    """A way references a node id that is not present in the extract."""


class DegenerateCorners(BevlocError):
    """Corner correspondences are collinear/duplicated; the DLT system is singular."""


class PointAtInfinity(BevlocError):
    """Projective denominator vanished while applying a homography."""


class BadShape(BevlocError):
    """Grid has the wrong channel count or non-divisible dimensions."""


class DimensionMismatch(BevlocError):
    """Feature grids disagree in descriptor dimension or spatial size."""


class OutOfCoverage(BevlocError):
    """Requested pose lies too close to the edge of the vector map."""


class EmptyResults(BevlocError):
    """Metrics requested over an empty result list."""
