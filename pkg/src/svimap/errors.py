"""Exception hierarchy.

Everything raised on bad input derives from :class:`SVIMapError`, which is
also a :class:`ValueError` so plain ``except ValueError`` callers keep working.
"""


class SVIMapError(ValueError):
    pass


class InvalidCoordinateError(SVIMapError):
    """Latitude/longitude out of range, or a non-finite coordinate."""


class DegenerateGeometryError(SVIMapError):
    """Geometry that has no unique answer (coincident points, zero-size objects)."""


class PixelRangeError(SVIMapError):
    """Pixel position outside the image."""


class InvalidSpecError(SVIMapError):
    """Thumbnail or image spec that cannot describe a camera."""


class InvalidDetectionError(SVIMapError):
    """Bounding box with zero area or inverted bounds."""


class ConfigError(SVIMapError):
    """Unknown class, bad kernel size, missing registry entry and similar."""


class DegenerateObjectError(DegenerateGeometryError):
    """Object subtends (almost) no angle; it is effectively at infinity."""


class PoleError(DegenerateGeometryError):
    """Altitude angle too close to the zenith or nadir."""


class IllConditionedPairError(DegenerateGeometryError):
    """Stereo rays are nearly parallel."""


class DivergentRaysError(DegenerateGeometryError):
    """Stereo rays do not meet in front of both cameras."""


class InvalidObservationError(SVIMapError):
    pass


class InvalidDepthError(SVIMapError):
    pass


class NoMeasurementError(SVIMapError):
    pass


class PairingRejectedError(SVIMapError):
    """Panoramas are not adjacent in a capture sequence."""


class SchemaError(SVIMapError):
    """Input record is missing a required field or has a wrong type."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NoTrunkError(SVIMapError):
    pass


class AmbiguousMaskError(SVIMapError):
    pass


class InvalidSceneError(SVIMapError):
    pass


class NotVisibleError(SVIMapError):
    """Scene object is behind the camera or outside the view."""
