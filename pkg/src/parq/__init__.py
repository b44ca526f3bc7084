"""parq: multi-view 3D object detection with pixel-aligned recurrent queries.

A small numpy library that trains and evaluates a recurrent-query detector
end to end on synthetic cuboid scenes: autodiff core, camera/box geometry,
Hungarian matching, the detector itself, losses, scene synthesis, and the
snippet-fusion evaluation protocol. The `parq` command line exposes
gen/train/infer/eval on top of it.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateRotationError,
    GenerationError,
    NumericError,
)
from .seeding import derive_rng

__all__ = [
    "__version__",
    "ConfigError",
    "DataFormatError",
    "DegenerateRotationError",
    "GenerationError",
    "NumericError",
    "derive_rng",
]
