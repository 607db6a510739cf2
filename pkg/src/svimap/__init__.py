"""Mapping street furniture, road widths and tree trunks from street view imagery metadata."""

__version__ = "0.1.0"

from .errors import SVIMapError  # noqa: E402
from .geo import (  # noqa: E402
    GeoPoint,
    LocalPoint,
    PanoramaPose,
    bearing_between,
    geo_to_local,
    local_to_geo,
)
from .projection import (  # noqa: E402
    AngularObservation,
    PixelBox,
    ThumbnailSpec,
    box_to_angular_extents,
    pano_pixel_to_angles,
    thumb_pixel_to_angles,
)
from .tacheometry import (  # noqa: E402
    Detection,
    DimensionRegistry,
    LocatedObject,
    localize_detection,
    merge_observations,
    tacheometric_distance,
)
from .triangulation import (  # noqa: E402
    StereoPair,
    TriangulatedTree,
    TrunkObservation,
    aggregate_tree,
    measure_pair,
    triangulate,
)
from .width import LandCoverRaster, Slice, measure_widths  # noqa: E402

__all__ = [
    "__version__",
    "SVIMapError",
    "GeoPoint",
    "LocalPoint",
    "PanoramaPose",
    "bearing_between",
    "geo_to_local",
    "local_to_geo",
    "AngularObservation",
    "PixelBox",
    "ThumbnailSpec",
    "box_to_angular_extents",
    "pano_pixel_to_angles",
    "thumb_pixel_to_angles",
    "Detection",
    "DimensionRegistry",
    "LocatedObject",
    "localize_detection",
    "merge_observations",
    "tacheometric_distance",
    "StereoPair",
    "TriangulatedTree",
    "TrunkObservation",
    "aggregate_tree",
    "measure_pair",
    "triangulate",
    "LandCoverRaster",
    "Slice",
    "measure_widths",
]
