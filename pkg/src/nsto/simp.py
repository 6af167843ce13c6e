"""Classical SIMP topology optimization with optimality-criteria updates and
cone-weighted density filtering, sharing the FEA core with the neural path.
Used as the comparison baseline for benchmark runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import fem, mesh
from .errors import InvalidSpecError, NumericalError
from .linsolve import SolverConfig
from .optimize import HistoryRecord, Problem


@dataclass(frozen=True)
class SimpConfig:
    penal: float = 3.0
    filter_radius: float = 1.5  # in element widths
    move: float = 0.2
    oc_tolerance: float = 1e-4
    max_iterations: int = 80

    def validate(self):
        if self.penal < 1:
            raise InvalidSpecError(f"penal must be >= 1, got {self.penal}")
        if self.filter_radius < 1:
            raise InvalidSpecError(f"filter radius must be >= 1, got {self.filter_radius}")
        if not 0 < self.move <= 1:
            raise InvalidSpecError(f"move limit must be in (0, 1], got {self.move}")


@lru_cache(maxsize=8)
def filter_matrix(grid: mesh.Grid, r_min: float) -> sp.csr_matrix:
    """Row-normalized cone-weight matrix H over element centers,
    weights max(0, r_min - dist) with distances in element widths."""
    reach = int(np.ceil(r_min)) - 1
    n = grid.n_elements
    dims = grid.dims
    idx = np.arange(n)
    coords = np.stack(
        [(idx // int(np.prod(dims[:a]))) % dims[a] for a in range(grid.ndim)],
        axis=1,
    )
    rows, cols, vals = [], [], []
    offsets = np.stack(
        np.meshgrid(*[np.arange(-reach, reach + 1)] * grid.ndim, indexing="ij"),
        axis=-1,
    ).reshape(-1, grid.ndim)
    strides = np.array([int(np.prod(dims[:a])) for a in range(grid.ndim)])
    for off in offsets:
        dist = np.sqrt(float(np.sum(off.astype(float) ** 2)))
        w = r_min - dist
        if w <= 0:
            continue
        nb = coords + off
        ok = np.all((nb >= 0) & (nb < np.asarray(dims)), axis=1)
        rows.append(idx[ok])
        cols.append((nb[ok] * strides).sum(axis=1))
        vals.append(np.full(ok.sum(), w))
    h = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    norm = np.asarray(h.sum(axis=1)).ravel()
    return sp.diags(1.0 / norm) @ h


def density_filter(field: np.ndarray, r_min: float, grid: mesh.Grid) -> np.ndarray:
    """Linear cone-weighted average; identity on constant fields."""
    if r_min < 1:
        raise InvalidSpecError(f"filter radius must be >= 1, got {r_min}")
    return filter_matrix(grid, r_min) @ np.asarray(field, dtype=float)


def oc_update(field: np.ndarray, dC_drho: np.ndarray, dV_drho: np.ndarray,
              delta: float, cfg: SimpConfig,
              free: np.ndarray | None = None) -> np.ndarray:
    """Multiplicative OC update with bisection on the volume multiplier.

    rho' = clamp(rho * sqrt(-dC / (Lambda dV)), [rho-move, rho+move] & [0,1]);
    Lambda bisected until mean(rho'[free]) hits delta to oc_tolerance.
    """
    field = np.asarray(field, dtype=float)
    dC = np.asarray(dC_drho, dtype=float)
    dV = np.asarray(dV_drho, dtype=float)
    if np.any(dC > 0):
        raise NumericalError("OC update requires non-positive compliance sensitivities")
    if free is None:
        free = np.arange(field.size)

    lo = np.maximum(field - cfg.move, 0.0)
    hi = np.minimum(field + cfg.move, 1.0)
    ratio = -dC / np.maximum(dV, 1e-30)

    def candidate(lmid):
        return np.clip(field * np.sqrt(ratio / lmid), lo, hi)

    def vol(lmid):
        return float(candidate(lmid)[free].mean())

    l_tiny = 1e-12
    # vol(Lambda -> 0) is the upper clamp; if even that is under budget, take it
    if vol(l_tiny) <= delta:
        return candidate(l_tiny)
    l1, l2 = l_tiny, 1.0
    for _ in range(60):
        if vol(l2) <= delta:
            break
        l2 *= 2.0
    else:
        raise NumericalError("OC bisection bracket not found in 60 doublings")
    for _ in range(200):
        lmid = 0.5 * (l1 + l2)
        v = vol(lmid)
        if abs(v - delta) <= cfg.oc_tolerance:
            return candidate(lmid)
        if v > delta:
            l1 = lmid
        else:
            l2 = lmid
    raise NumericalError("OC bisection did not reach the volume tolerance")


def simp_optimize(problem: Problem, cfg: SimpConfig,
                  solver_cfg: SolverConfig | None = None,
                  history_sink=None):
    """Filter -> FEA -> sensitivities -> sensitivity filter -> OC loop.

    Returns (density field, history). Uniform initialization at rho = delta;
    sensitivity filtering (filter on rho*dC) as in the classic scheme.
    """
    problem.validate()
    cfg.validate()
    if solver_cfg is None:
        solver_cfg = SolverConfig()
    grid = problem.grid
    boundary = mesh.resolve_boundary(grid, problem.boundary)
    delta = problem.volume_fraction
    passive = boundary.passive
    free = boundary.free_elements

    rho = np.full(grid.n_elements, delta)
    rho[passive == mesh.PASSIVE_VOID] = 0.0
    rho[passive == mesh.PASSIVE_SOLID] = 1.0
    h = filter_matrix(grid, cfg.filter_radius)
    history: list[HistoryRecord] = []
    for it in range(cfg.max_iterations):
        K = fem.assemble(grid, rho, cfg.penal, problem.material, passive)
        U, stats = fem.solve_displacement(
            K, boundary.force, boundary.fixed_dofs, solver_cfg, grid
        )
        C, dC = fem.compliance_and_gradient(
            rho, U, grid, cfg.penal, problem.material, passive
        )
        # sensitivity filter: dc <- H(rho*dc) / max(rho, 1e-3)
        dC_f = (h @ (rho * dC)) / np.maximum(rho, 1e-3)
        dC_f = np.minimum(dC_f, 0.0)
        new = oc_update(rho, dC_f, np.ones_like(rho), delta, cfg, free)
        new[passive == mesh.PASSIVE_VOID] = 0.0
        new[passive == mesh.PASSIVE_SOLID] = 1.0
        rho = new
        V, V0 = float(rho[free].sum()), float(free.size)
        rec = HistoryRecord(it, 0, C, C, V / V0, 0.0, 0.0, stats.iterations)
        history.append(rec)
        if history_sink is not None:
            history_sink(rec)
    return rho, history
