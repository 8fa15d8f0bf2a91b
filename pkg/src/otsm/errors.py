"""Exception hierarchy shared across the toolkit."""


class OtsmError(Exception):
    """Base class for all toolkit errors."""


class NonPositiveField(OtsmError):
    """Field integral is non-positive or values dip below -1e-12."""


class NaNField(OtsmError):
    """Field contains non-finite values."""


class InvalidBandwidth(OtsmError):
    """Particle bandwidth must be a positive scalar."""


class SizeMismatch(OtsmError):
    """Particle clouds (or grids) have incompatible sizes."""


class EmptyEnsemble(OtsmError):
    """Multimarginal matching needs at least two clouds."""


class TooLarge(OtsmError):
    """Brute-force enumeration guard tripped."""


class SelfIntersectingPolygon(OtsmError):
    """Polygon boundary crosses itself."""


class DegeneratePolygon(OtsmError):
    """Polygon has fewer than 3 vertices or near-zero area."""


class OutOfBox(OtsmError):
    """Query point lies outside the reference box."""


class BadWeights(OtsmError):
    """Barycentric weights must be non-negative and sum to 1."""


class RayMiss(OtsmError):
    """Centroid ray failed to hit the polygon boundary."""


class SingularSystem(OtsmError):
    """Heat solver linear system could not be solved."""


class EmptyInterior(OtsmError):
    """Domain mask contains no interior nodes."""


class ZeroReference(OtsmError):
    """Relative-error denominator is numerically zero."""


class InsufficientSnapshots(OtsmError):
    """Training needs at least two snapshots per geometry."""
