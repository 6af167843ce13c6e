"""Linear-elasticity finite-element core.

Element stiffness via Gauss quadrature on bilinear quads (plane stress,
unit thickness) and trilinear hexes; SIMP-weighted sparse assembly;
displacement solve through the iterative solver; compliance and its
analytic per-element density gradient.

Stiffness interpolation uses the modified SIMP form
    scale(rho) = e_min + rho^tau * (E - e_min)
so the global matrix stays nonsingular for fully void elements.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import mesh
from .errors import InvalidMaterialError, ShapeError
from .linsolve import SolverConfig, pcg_solve, build_multigrid_preconditioner, jacobi_preconditioner


@dataclass(frozen=True)
class Material:
    youngs_modulus: float = 1.0
    poisson_ratio: float = 0.3
    e_min: float = 1e-9

    def validate(self):
        if self.poisson_ratio >= 0.5 or self.poisson_ratio < 0:
            raise InvalidMaterialError(
                f"poisson_ratio must be in [0, 0.5), got {self.poisson_ratio}"
            )
        if not self.youngs_modulus > self.e_min > 0:
            raise InvalidMaterialError(
                f"need E > e_min > 0, got E={self.youngs_modulus}, e_min={self.e_min}"
            )


def _gauss_points_1d():
    g = 1.0 / np.sqrt(3.0)
    return np.array([-g, g]), np.array([1.0, 1.0])


def _shape_grad_2d(xi, eta):
    """Derivatives of the 4 bilinear shape functions wrt (xi, eta).

    Node order matches mesh.element_nodes: (-1,-1), (1,-1), (1,1), (-1,1).
    """
    dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
    deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
    return dxi, deta


def _shape_grad_3d(xi, eta, zeta):
    signs = np.array(
        [
            [-1, -1, -1],
            [1, -1, -1],
            [1, 1, -1],
            [-1, 1, -1],
            [-1, -1, 1],
            [1, -1, 1],
            [1, 1, 1],
            [-1, 1, 1],
        ],
        dtype=float,
    )
    sx, sy, sz = signs[:, 0], signs[:, 1], signs[:, 2]
    dxi = 0.125 * sx * (1 + sy * eta) * (1 + sz * zeta)
    deta = 0.125 * sy * (1 + sx * xi) * (1 + sz * zeta)
    dzeta = 0.125 * sz * (1 + sx * xi) * (1 + sy * eta)
    return dxi, deta, dzeta


def constitutive(material: Material, ndim: int) -> np.ndarray:
    """Plane-stress matrix in 2D, isotropic 3D elasticity matrix in 3D,
    for unit Young's modulus times E."""
    E, nu = material.youngs_modulus, material.poisson_ratio
    if ndim == 2:
        c = E / (1 - nu**2) * np.array(
            [[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]]
        )
    else:
        lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        mu = E / (2 * (1 + nu))
        c = np.zeros((6, 6))
        c[:3, :3] = lam
        c[np.arange(3), np.arange(3)] = lam + 2 * mu
        c[np.arange(3, 6), np.arange(3, 6)] = mu
    return c


def element_stiffness(material: Material, ndim: int, element_size=(1.0, 1.0)) -> np.ndarray:
    """Element stiffness matrix K_e = int B^T c B dv via 2-point Gauss
    quadrature per axis. 8x8 for 2D quads, 24x24 for 3D hexes."""
    material.validate()
    if np.isscalar(element_size):
        element_size = (element_size,) * ndim
    h = np.asarray(element_size, dtype=float)
    c = constitutive(material, ndim)
    pts, wts = _gauss_points_1d()
    n_nodes = 4 if ndim == 2 else 8
    ke = np.zeros((ndim * n_nodes, ndim * n_nodes))
    jac = h / 2.0  # diagonal Jacobian of the reference-to-physical map
    detj = np.prod(jac)
    if ndim == 2:
        for xi, wx in zip(pts, wts):
            for eta, wy in zip(pts, wts):
                dxi, deta = _shape_grad_2d(xi, eta)
                dx, dy = dxi / jac[0], deta / jac[1]
                b = np.zeros((3, 8))
                b[0, 0::2] = dx
                b[1, 1::2] = dy
                b[2, 0::2] = dy
                b[2, 1::2] = dx
                ke += wx * wy * detj * (b.T @ c @ b)
    else:
        for xi, wx in zip(pts, wts):
            for eta, wy in zip(pts, wts):
                for zeta, wz in zip(pts, wts):
                    dxi, deta, dzeta = _shape_grad_3d(xi, eta, zeta)
                    dx, dy, dz = dxi / jac[0], deta / jac[1], dzeta / jac[2]
                    b = np.zeros((6, 24))
                    b[0, 0::3] = dx
                    b[1, 1::3] = dy
                    b[2, 2::3] = dz
                    b[3, 0::3] = dy
                    b[3, 1::3] = dx
                    b[4, 1::3] = dz
                    b[4, 2::3] = dy
                    b[5, 0::3] = dz
                    b[5, 2::3] = dx
                    ke += wx * wy * wz * detj * (b.T @ c @ b)
    return ke


@lru_cache(maxsize=16)
def _grid_stiffness(grid: mesh.Grid, material: Material) -> np.ndarray:
    return element_stiffness(material, grid.ndim, grid.element_size)


@lru_cache(maxsize=16)
def _scatter_indices(grid: mesh.Grid):
    edofs = mesh.element_dofs(grid)
    k = edofs.shape[1]
    rows = np.repeat(edofs, k, axis=1).ravel()
    cols = np.tile(edofs, (1, k)).ravel()
    return rows, cols


def simp_scale(densities: np.ndarray, tau: float, material: Material) -> np.ndarray:
    return material.e_min + densities**tau * (material.youngs_modulus - material.e_min)


def apply_passive(densities: np.ndarray, passive: np.ndarray | None) -> np.ndarray:
    if passive is None:
        return densities
    out = densities.copy()
    out[passive == mesh.PASSIVE_VOID] = 0.0
    out[passive == mesh.PASSIVE_SOLID] = 1.0
    return out


def assemble(grid: mesh.Grid, densities: np.ndarray, tau: float,
             material: Material, passive: np.ndarray | None = None) -> sp.csr_matrix:
    """Assemble the global stiffness matrix with per-element SIMP scaling."""
    densities = np.asarray(densities, dtype=float)
    if densities.shape != (grid.n_elements,):
        raise ShapeError(
            f"density field has {densities.shape}, expected ({grid.n_elements},)"
        )
    densities = apply_passive(densities, passive)
    ke = _grid_stiffness(grid, material)
    scale = simp_scale(densities, tau, material)
    rows, cols = _scatter_indices(grid)
    data = (scale[:, None, None] * ke[None, :, :]).ravel()
    k = sp.coo_matrix((data, (rows, cols)), shape=(grid.n_dofs, grid.n_dofs))
    return k.tocsr()


def reduce_system(K: sp.csr_matrix, F: np.ndarray, fixed_dofs: np.ndarray):
    """Eliminate fixed DOFs by row/column reduction."""
    n = K.shape[0]
    free = np.setdiff1d(np.arange(n), fixed_dofs)
    return K[free][:, free].tocsr(), F[free], free


def solve_displacement(K: sp.csr_matrix, F: np.ndarray, fixed_dofs: np.ndarray,
                       config: SolverConfig | None = None,
                       grid: mesh.Grid | None = None):
    """Solve K U = F with homogeneous Dirichlet DOFs removed.

    Returns (U, SolveStats) with U full length, zeros at fixed DOFs.
    The multigrid preconditioner needs the grid for its node hierarchy;
    without it the solve falls back to Jacobi.
    """
    if config is None:
        config = SolverConfig()
    fixed_dofs = np.asarray(fixed_dofs, dtype=int)
    if fixed_dofs.size == 0:
        raise ShapeError("fixed DOF set must be non-empty")
    Kr, Fr, free = reduce_system(K, F, fixed_dofs)
    if config.preconditioner == "multigrid-v" and grid is not None:
        precond = build_multigrid_preconditioner(Kr, grid, free, config)
    else:
        precond = jacobi_preconditioner(Kr)
    ur, stats = pcg_solve(Kr, Fr, config, preconditioner=precond)
    u = np.zeros(K.shape[0])
    u[free] = ur
    return u, stats


def compliance_and_gradient(densities: np.ndarray, U: np.ndarray, grid: mesh.Grid,
                            tau: float, material: Material,
                            passive: np.ndarray | None = None):
    """Compliance C = sum_e scale(rho_e) u_e^T K_e u_e and its analytic
    density gradient dC/drho_e = -tau rho^(tau-1) (E-e_min) u_e^T K_e u_e.

    Passive elements get zero gradient (their density is pinned).
    """
    densities = np.asarray(densities, dtype=float)
    if densities.shape != (grid.n_elements,):
        raise ShapeError(
            f"density field has {densities.shape}, expected ({grid.n_elements},)"
        )
    if U.shape != (grid.n_dofs,):
        raise ShapeError(f"U has {U.shape}, expected ({grid.n_dofs},)")
    eff = apply_passive(densities, passive)
    ke = _grid_stiffness(grid, material)
    ue = U[mesh.element_dofs(grid)]  # (n_elem, k)
    q = np.einsum("ei,ij,ej->e", ue, ke, ue)  # u_e^T K_e u_e >= 0
    scale = simp_scale(eff, tau, material)
    compliance = float(scale @ q)
    de = material.youngs_modulus - material.e_min
    grad = -tau * eff ** (tau - 1.0) * de * q
    if passive is not None:
        grad[passive != mesh.PASSIVE_FREE] = 0.0
    return compliance, grad
