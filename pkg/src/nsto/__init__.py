"""Neural synthesizing topology optimization toolkit.

A coordinate network encodes a structure's material layout, is trained
against a finite-element compliance loss under an augmented-Lagrangian
volume constraint, and (with a modulator auto-decoder) spans continuous
solution spaces over varying boundary conditions.
"""

from .errors import (
    ArchiveFormatError,
    InvalidMaterialError,
    InvalidSpecError,
    NumericalError,
    ShapeError,
    SolverError,
)
from .fem import Material
from .linsolve import SolverConfig, SolveStats
from .mesh import (
    BoundarySpec,
    Box,
    FixedRegion,
    Grid,
    LoadRegion,
    PassiveRegion,
    build_grid,
    resolve_boundary,
    sample_coordinates,
)
from .optimize import (
    NetworkConfig,
    Problem,
    TrainConfig,
    TrainedModel,
    infer,
    train_multi,
    train_single,
)
from .simp import SimpConfig, simp_optimize

__all__ = [
    "ArchiveFormatError",
    "BoundarySpec",
    "Box",
    "FixedRegion",
    "Grid",
    "InvalidMaterialError",
    "InvalidSpecError",
    "LoadRegion",
    "Material",
    "NetworkConfig",
    "NumericalError",
    "PassiveRegion",
    "Problem",
    "ShapeError",
    "SimpConfig",
    "SolveStats",
    "SolverConfig",
    "SolverError",
    "TrainConfig",
    "TrainedModel",
    "build_grid",
    "infer",
    "resolve_boundary",
    "sample_coordinates",
    "simp_optimize",
    "train_multi",
    "train_single",
]

__version__ = "0.1.0"
