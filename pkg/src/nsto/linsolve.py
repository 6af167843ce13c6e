"""Preconditioned conjugate gradients for the reduced SPD system.

Preconditioners: Jacobi, or a geometric-multigrid V-cycle built by 2x
coarsening of the structured node grid (Galerkin coarse operators,
damped-Jacobi smoothing, direct solve on the coarsest level).

All reductions are plain sequential numpy operations, so identical inputs
give identical iterates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidSpecError, SolverError


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-8
    max_iterations: int = 2000
    preconditioner: str = "multigrid-v"  # or "jacobi"
    smoother_damping: float = 0.6
    smoothing_sweeps: int = 2
    min_coarse_dofs: int = 64

    def validate(self):
        if not self.tolerance > 0:
            raise InvalidSpecError(f"solver tolerance must be > 0, got {self.tolerance}")
        if self.max_iterations < 1:
            raise InvalidSpecError("max_iterations must be >= 1")
        if self.preconditioner not in ("jacobi", "multigrid-v"):
            raise InvalidSpecError(
                f"unknown preconditioner {self.preconditioner!r}"
            )


@dataclass
class SolveStats:
    iterations: int
    final_relative_residual: float
    converged: bool


def jacobi_preconditioner(A: sp.csr_matrix):
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("matrix has non-positive diagonal entries; not SPD")
    inv = 1.0 / d

    def apply(r):
        return inv * r

    return apply


def pcg_solve(A: sp.csr_matrix, b: np.ndarray, config: SolverConfig | None = None,
              preconditioner=None):
    """Conjugate gradients with an SPD preconditioner.

    Returns (x, SolveStats); raises SolverError on non-convergence or NaN.
    """
    if config is None:
        config = SolverConfig()
    config.validate()
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise SolverError("right-hand side contains non-finite entries")
    if preconditioner is None:
        preconditioner = jacobi_preconditioner(A)

    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, SolveStats(0, 0.0, True)

    r = b.copy()
    z = preconditioner(r)
    p = z.copy()
    rz = float(r @ z)
    rel = 1.0
    for it in range(1, config.max_iterations + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp <= 0:
            raise SolverError(
                f"breakdown at iteration {it}: p^T A p = {pAp}",
                SolveStats(it, rel, False),
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = float(np.linalg.norm(r) / bnorm)
        if not np.isfinite(rel):
            raise SolverError(
                f"divergence (NaN residual) at iteration {it}",
                SolveStats(it, rel, False),
            )
        if rel <= config.tolerance:
            return x, SolveStats(it, rel, True)
        z = preconditioner(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"PCG failed to converge in {config.max_iterations} iterations "
        f"(relative residual {rel:.3e})",
        SolveStats(config.max_iterations, rel, False),
    )


def _interp_1d(n_fine: int) -> sp.csr_matrix:
    """Linear interpolation from the (n_fine/2)-element coarse node line to
    the n_fine-element fine node line. n_fine must be even."""
    nf, nc = n_fine + 1, n_fine // 2 + 1
    rows, cols, vals = [], [], []
    for i in range(nc):
        rows.append(2 * i)
        cols.append(i)
        vals.append(1.0)
    for i in range(nc - 1):
        rows.extend([2 * i + 1, 2 * i + 1])
        cols.extend([i, i + 1])
        vals.extend([0.5, 0.5])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nf, nc))


def _node_prolongation(dims, ndim) -> sp.csr_matrix:
    """DOF-space prolongation for a structured grid with lexicographic
    node numbering (x fastest) and interleaved DOF components."""
    p = _interp_1d(dims[0])
    for d in dims[1:]:
        p = sp.kron(_interp_1d(d), p, format="csr")
    return sp.kron(p, sp.identity(ndim, format="csr"), format="csr")


def build_hierarchy(A: sp.csr_matrix, grid, free_dofs: np.ndarray,
                    config: SolverConfig):
    """Galerkin hierarchy for the reduced system A (rows/cols = free_dofs).

    Coarse fixed DOFs are the fine fixed DOFs that land on coarse nodes.
    Returns (levels, coarse_factor) where levels is a list of
    (A_level, P_level_to_finer); the first level has P = None.
    """
    ndim = grid.ndim
    dims = tuple(grid.dims)
    n_full = grid.n_dofs
    fixed = np.setdiff1d(np.arange(n_full), free_dofs)

    levels = [(A, None)]
    cur_dims, cur_fixed, cur_free, cur_A = dims, fixed, free_dofs, A
    while all(d % 2 == 0 and d >= 4 for d in cur_dims) and cur_A.shape[0] > config.min_coarse_dofs:
        coarse_dims = tuple(d // 2 for d in cur_dims)
        P_full = _node_prolongation(cur_dims, ndim)
        # fine node (2i, 2j, ...) maps to coarse node (i, j, ...)
        coarse_fixed = _coarsen_fixed(cur_dims, coarse_dims, ndim, cur_fixed)
        n_coarse = P_full.shape[1]
        coarse_free = np.setdiff1d(np.arange(n_coarse), coarse_fixed)
        P = P_full[cur_free][:, coarse_free].tocsr()
        A_c = (P.T @ cur_A @ P).tocsr()
        levels.append((A_c, P))
        cur_dims, cur_fixed, cur_free, cur_A = (
            coarse_dims,
            coarse_fixed,
            coarse_free,
            A_c,
        )
        if A_c.shape[0] <= config.min_coarse_dofs:
            break
    coarsest = levels[-1][0].tocsc()
    # tiny diagonal shift guards against semi-definite corner cases
    shift = 1e-14 * abs(coarsest).max()
    coarsest = coarsest + sp.identity(coarsest.shape[0], format="csc") * shift
    try:
        factor = spla.splu(coarsest)
    except RuntimeError as exc:
        raise SolverError(f"coarsest multigrid level is not solvable: {exc}") from exc
    return levels, factor


def _coarsen_fixed(fine_dims, coarse_dims, ndim, fine_fixed):
    if fine_fixed.size == 0:
        return fine_fixed
    node = fine_fixed // ndim
    comp = fine_fixed % ndim
    fine_node_dims = tuple(d + 1 for d in fine_dims)
    idx = []
    rem = node
    for d in fine_node_dims:
        idx.append(rem % d)
        rem = rem // d
    idx = np.stack(idx, axis=1)  # per-axis node indices, x first
    on_coarse = np.all(idx % 2 == 0, axis=1)
    cidx = idx[on_coarse] // 2
    ccomp = comp[on_coarse]
    cnode = np.zeros(len(cidx), dtype=int)
    stride = 1
    for a, d in enumerate(tuple(cd + 1 for cd in coarse_dims)):
        cnode += cidx[:, a] * stride
        stride *= d
    return np.unique(ndim * cnode + ccomp)


def v_cycle(levels, coarse_factor, r: np.ndarray, config: SolverConfig,
            level: int = 0) -> np.ndarray:
    """One V-cycle for the residual equation A z = r; linear and symmetric
    (equal pre/post damped-Jacobi sweeps)."""
    A = levels[level][0]
    if level == len(levels) - 1:
        return coarse_factor.solve(r)
    w = config.smoother_damping
    dinv = w / A.diagonal()
    x = np.zeros_like(r)
    for _ in range(config.smoothing_sweeps):
        x += dinv * (r - A @ x)
    res = r - A @ x
    P = levels[level + 1][1]
    x += P @ v_cycle(levels, coarse_factor, P.T @ res, config, level + 1)
    for _ in range(config.smoothing_sweeps):
        x += dinv * (r - A @ x)
    return x


def build_multigrid_preconditioner(A: sp.csr_matrix, grid, free_dofs, config):
    """V-cycle preconditioner closure for the reduced system.

    Degenerates to damped-Jacobi sweeps when the grid cannot be coarsened.
    """
    if grid is None or not all(d % 2 == 0 and d >= 4 for d in grid.dims):
        return smoothing_preconditioner(A, config)
    levels, factor = build_hierarchy(A, grid, free_dofs, config)

    def apply(r):
        return v_cycle(levels, factor, r, config)

    return apply


def smoothing_preconditioner(A: sp.csr_matrix, config: SolverConfig):
    """Degenerate 1-level hierarchy: damped-Jacobi sweeps only."""
    dinv = config.smoother_damping / A.diagonal()
    sweeps = 2 * config.smoothing_sweeps

    def apply(r):
        x = dinv * r
        for _ in range(sweeps - 1):
            x += dinv * (r - A @ x)
        return x

    return apply
