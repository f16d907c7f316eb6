"""Berezin quantization numerics: frames, Toeplitz operators and Berezin transforms."""

__version__ = "0.1.0"

from .errors import (BerezinLabError, GeometryMismatch, InvalidArgument, NonAdmissibleError,  # noqa: E402
                     ResourceError, StageFailure)
from .phase_space import Geometry, GroupElement, QuadGrid, affine_grid, finite_gabor_grid, plane_grid  # noqa: E402
from .frames import FrameFamily, HilbertVector, Lattice, window  # noqa: E402

__all__ = [
    "BerezinLabError", "GeometryMismatch", "InvalidArgument", "NonAdmissibleError", "ResourceError",
    "StageFailure", "Geometry", "GroupElement", "QuadGrid", "affine_grid", "finite_gabor_grid", "plane_grid",
    "FrameFamily", "HilbertVector", "Lattice", "window",
]
