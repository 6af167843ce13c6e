"""Structured-grid discretization: node/DOF numbering, coordinate sampling,
boundary-condition and passive-region resolution.

Conventions (used everywhere downstream):
  * grids are 2D (quads) or 3D (hexes) with lexicographic numbering,
    x fastest: node = ix + (nx+1)*(iy + (ny+1)*iz), element analogous,
  * DOF k of node n is ndim*n + k,
  * network input coordinates are element centers normalized per axis
    to the open interval (-1, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvalidSpecError

# containment tolerance for axis-aligned box selectors (physical units)
BOX_TOL = 1e-9

PASSIVE_FREE = 0
PASSIVE_SOLID = 1
PASSIVE_VOID = -1


@dataclass(frozen=True)
class Grid:
    """Structured grid of square/cubic elements."""

    dims: tuple[int, ...]
    element_size: tuple[float, ...]

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.dims))

    @property
    def node_dims(self) -> tuple[int, ...]:
        return tuple(d + 1 for d in self.dims)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_dims))

    @property
    def n_dofs(self) -> int:
        return self.ndim * self.n_nodes

    @property
    def extent(self) -> tuple[float, ...]:
        return tuple(d * h for d, h in zip(self.dims, self.element_size))


def build_grid(dims, element_size=1.0) -> Grid:
    """Create a grid from per-axis element counts and edge lengths."""
    dims = tuple(int(d) for d in dims)
    if len(dims) not in (2, 3):
        raise InvalidSpecError(f"grid must be 2D or 3D, got {len(dims)} axes")
    if any(d < 1 for d in dims):
        raise InvalidSpecError(f"grid dimensions must be >= 1, got {dims}")
    if np.isscalar(element_size):
        element_size = (float(element_size),) * len(dims)
    else:
        element_size = tuple(float(h) for h in element_size)
    if len(element_size) != len(dims):
        raise InvalidSpecError("element_size must be scalar or match dims")
    if any(h <= 0 for h in element_size):
        raise InvalidSpecError(f"element size must be positive, got {element_size}")
    return Grid(dims, element_size)


def node_index_grid(grid: Grid) -> np.ndarray:
    """Node indices arranged as an array of shape node_dims[::-1] (z,y,x order)."""
    return np.arange(grid.n_nodes).reshape(grid.node_dims[::-1])


@lru_cache(maxsize=32)
def element_nodes(grid: Grid) -> np.ndarray:
    """(n_elements, 4 or 8) corner node indices per element.

    2D corner order: (0,0), (1,0), (1,1), (0,1) counter-clockwise.
    3D appends the z+1 layer in the same x/y order.
    """
    nx = grid.dims[0]
    nxn = nx + 1
    if grid.ndim == 2:
        ny = grid.dims[1]
        ex, ey = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        n0 = (ex + nxn * ey).T.ravel()  # element order: x fastest
        corners = np.stack([n0, n0 + 1, n0 + 1 + nxn, n0 + nxn], axis=1)
    else:
        ny, nz = grid.dims[1], grid.dims[2]
        nyn = ny + 1
        ez, ey, ex = np.meshgrid(
            np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij"
        )
        n0 = (ex + nxn * (ey + nyn * ez)).ravel()
        layer = nxn * nyn
        base = np.stack([n0, n0 + 1, n0 + 1 + nxn, n0 + nxn], axis=1)
        corners = np.concatenate([base, base + layer], axis=1)
    corners.setflags(write=False)
    return corners


@lru_cache(maxsize=32)
def element_dofs(grid: Grid) -> np.ndarray:
    """(n_elements, 8 or 24) global DOF indices per element, node-major."""
    nodes = element_nodes(grid)
    d = grid.ndim
    dofs = (d * nodes[:, :, None] + np.arange(d)[None, None, :]).reshape(
        nodes.shape[0], -1
    )
    dofs.setflags(write=False)
    return dofs


@dataclass(frozen=True)
class CoordinateArray:
    """Element-center coordinates normalized per axis to (-1, 1)."""

    points: np.ndarray
    scale: int


def sample_coordinates(grid: Grid, scale: int = 1) -> CoordinateArray:
    """Centers of the scale-times-subdivided element grid, normalized per axis.

    Row order matches element numbering of the refined grid (x fastest).
    """
    if int(scale) != scale or scale < 1:
        raise InvalidSpecError(f"super-resolution scale must be an integer >= 1, got {scale}")
    scale = int(scale)
    axes = [
        (np.arange(scale * d) + 0.5) / (scale * d) * 2.0 - 1.0 for d in grid.dims
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    # x fastest: reverse to (z, y, x) C-order before ravel
    pts = np.stack([m.transpose(range(grid.ndim)[::-1]).ravel() for m in mesh], axis=1)
    pts.setflags(write=False)
    return CoordinateArray(points=pts, scale=scale)


def node_coordinates(grid: Grid) -> np.ndarray:
    """(n_nodes, ndim) physical node positions."""
    axes = [np.arange(d + 1) * h for d, h in zip(grid.dims, grid.element_size)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(
        [m.transpose(range(grid.ndim)[::-1]).ravel() for m in mesh], axis=1
    )


def element_centers(grid: Grid) -> np.ndarray:
    """(n_elements, ndim) physical element-center positions."""
    axes = [
        (np.arange(d) + 0.5) * h for d, h in zip(grid.dims, grid.element_size)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(
        [m.transpose(range(grid.ndim)[::-1]).ravel() for m in mesh], axis=1
    )


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box in physical coordinates."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def contains(self, points: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo) - BOX_TOL
        hi = np.asarray(self.hi) + BOX_TOL
        return np.all((points >= lo) & (points <= hi), axis=1)


@dataclass(frozen=True)
class FixedRegion:
    box: Box
    dofs: tuple[int, ...]  # axis indices to constrain, e.g. (0,) fixes x


@dataclass(frozen=True)
class LoadRegion:
    box: Box
    force: tuple[float, ...]  # total force, split equally over selected nodes


@dataclass(frozen=True)
class PassiveRegion:
    box: Box
    state: str  # 'void' or 'solid'


@dataclass(frozen=True)
class BoundarySpec:
    fixed: tuple[FixedRegion, ...]
    loads: tuple[LoadRegion, ...]
    passive: tuple[PassiveRegion, ...] = ()


@dataclass
class Boundary:
    """Resolved boundary data for one grid."""

    fixed_dofs: np.ndarray  # sorted, unique
    force: np.ndarray  # (n_dofs,)
    passive: np.ndarray  # (n_elements,) int8: 0 free, 1 solid, -1 void
    free_elements: np.ndarray = field(init=False)

    def __post_init__(self):
        self.free_elements = np.flatnonzero(self.passive == PASSIVE_FREE)


def resolve_boundary(grid: Grid, spec: BoundarySpec) -> Boundary:
    """Resolve region selectors into DOF indices, a global force vector and a
    passive element mask. Raises InvalidSpecError on empty selections."""
    d = grid.ndim
    nodes = node_coordinates(grid)

    fixed: list[np.ndarray] = []
    for i, region in enumerate(spec.fixed):
        sel = np.flatnonzero(region.box.contains(nodes))
        if sel.size == 0:
            raise InvalidSpecError(f"fixed region #{i} selects no nodes")
        bad = [a for a in region.dofs if not 0 <= a < d]
        if bad or not region.dofs:
            raise InvalidSpecError(f"fixed region #{i} has invalid DOF mask {region.dofs}")
        for axis in region.dofs:
            fixed.append(d * sel + axis)
    fixed_dofs = (
        np.unique(np.concatenate(fixed)) if fixed else np.empty(0, dtype=int)
    )
    if fixed_dofs.size == 0:
        raise InvalidSpecError("boundary spec fixes no DOFs (rigid-body motion)")

    force = np.zeros(grid.n_dofs)
    loaded_nodes: list[np.ndarray] = []
    for i, region in enumerate(spec.loads):
        sel = np.flatnonzero(region.box.contains(nodes))
        if sel.size == 0:
            raise InvalidSpecError(f"load region #{i} selects no nodes")
        if len(region.force) != d:
            raise InvalidSpecError(f"load region #{i} force must have {d} components")
        per_node = np.asarray(region.force, dtype=float) / sel.size
        for axis in range(d):
            np.add.at(force, d * sel + axis, per_node[axis])
        loaded_nodes.append(sel)

    passive = np.zeros(grid.n_elements, dtype=np.int8)
    centers = element_centers(grid)
    for i, region in enumerate(spec.passive):
        sel = region.box.contains(centers)
        if region.state == "void":
            passive[sel] = PASSIVE_VOID
        elif region.state == "solid":
            passive[sel] = PASSIVE_SOLID
        else:
            raise InvalidSpecError(
                f"passive region #{i} state must be 'void' or 'solid', got {region.state!r}"
            )

    if loaded_nodes and (passive == PASSIVE_VOID).any():
        _check_loads_outside_void(grid, passive, np.concatenate(loaded_nodes))

    return Boundary(fixed_dofs=fixed_dofs, force=force, passive=passive)


def _check_loads_outside_void(grid, passive, loaded):
    """A loaded node attached only to passive-void elements carries force into
    a region with (numerically) no stiffness; reject at resolve time."""
    corners = element_nodes(grid)
    touches_nonvoid = np.zeros(grid.n_nodes, dtype=bool)
    nonvoid = passive != PASSIVE_VOID
    touched = corners[nonvoid].ravel()
    touches_nonvoid[touched] = True
    bad = np.setdiff1d(np.unique(loaded), np.flatnonzero(touches_nonvoid))
    if bad.size:
        raise InvalidSpecError(
            f"load applied to nodes {bad.tolist()} that belong only to passive-void elements"
        )
