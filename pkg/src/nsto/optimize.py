"""Training drivers: augmented-Lagrangian loss, dual updates, total density
gradient, single- and multi-structure loops, convergence detection and
super-resolved inference.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import fem, mesh, neural
from .errors import InvalidSpecError, NumericalError, SolverError
from .linsolve import SolverConfig


@dataclass(frozen=True)
class NetworkConfig:
    width: int = 512
    depth: int = 4  # total layers: depth-1 sinusoidal + 1 output
    omega: float = 60.0
    alpha: float = 0.1
    seed: int = 0
    latent_dim: int = 1

    def validate(self):
        if self.width < 1:
            raise InvalidSpecError(f"width must be >= 1, got {self.width}")
        if self.depth < 2:
            raise InvalidSpecError(f"depth must be >= 2, got {self.depth}")
        if self.omega <= 0 or self.alpha <= 0:
            raise InvalidSpecError("omega and alpha must be positive")
        if self.latent_dim < 1:
            raise InvalidSpecError(f"latent_dim must be >= 1, got {self.latent_dim}")


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 300
    optimizer: str = "rprop"
    learning_rate: float = 1e-4
    sigma0: float = 1.0
    sigma_growth: float = 1.1
    lambda0: float = 0.0
    tau_start: float = 1.5
    tau_end: float = 3.0
    tau_ramp_epochs: int = 50
    compliance_tol: float = 0.003  # 0.3% step-to-step compliance change
    volume_tol: float = 0.01  # 1% deviation of V/V0 from delta
    stop_on_convergence: bool = False

    def validate(self):
        if not 1.5 <= self.tau_start <= 3.0 or not 1.5 <= self.tau_end <= 3.0:
            raise InvalidSpecError("tau schedule must stay within [1.5, 3.0]")
        if self.sigma_growth <= 1.0:
            raise InvalidSpecError("sigma growth base must be > 1")
        if self.max_epochs < 0:
            raise InvalidSpecError("max_epochs must be >= 0")


@dataclass(frozen=True)
class Problem:
    """One optimization task: grid, material, boundary spec, volume budget."""

    grid: mesh.Grid
    material: fem.Material
    boundary: mesh.BoundarySpec
    volume_fraction: float

    def validate(self):
        self.material.validate()
        if not 0.0 < self.volume_fraction <= 1.0:
            raise InvalidSpecError(
                f"volume fraction must be in (0, 1], got {self.volume_fraction}"
            )


@dataclass
class TrainState:
    lam: float
    sigma0: float
    tau: float
    epoch: int = 0
    sigma: float = 0.0
    converged_epoch: int | None = None

    def __post_init__(self):
        self.sigma = self.sigma0


@dataclass
class HistoryRecord:
    epoch: int
    subtask: int
    loss: float
    compliance: float
    volume: float  # V / V0
    lam: float
    sigma: float
    solver_iters: int

    FIELDS = ("epoch", "subtask", "loss", "compliance", "volume", "lambda",
              "sigma", "solver_iters")

    def row(self):
        return (self.epoch, self.subtask, self.loss, self.compliance,
                self.volume, self.lam, self.sigma, self.solver_iters)


@dataclass
class TrainedModel:
    kind: str  # 'single' or 'dual'
    params: object  # OscillatorParams or DualParams
    grid: mesh.Grid
    history: list[HistoryRecord]
    states: list[TrainState]
    subtask_deltas: list[float]
    converged: bool

    def latent(self, i: int) -> np.ndarray:
        if self.kind != "dual":
            raise InvalidSpecError("single-structure model has no latent codes")
        return self.params.latents[i]


def augmented_lagrangian(C: float, V: float, V0: float, delta: float,
                         lam: float, sigma: float) -> float:
    """L = C + lambda * g^2 + sigma * g^4 with g = V/V0 - delta."""
    if not V0 > 0:
        raise InvalidSpecError("V0 must be positive")
    g = V / V0 - delta
    return C + lam * g**2 + sigma * g**4


def dual_update(state: TrainState, V: float, V0: float, delta: float,
                growth: float = 1.1) -> TrainState:
    """lambda_{k+1} = lambda_k + 2 sigma_k g^2; sigma_{k+1} = sigma_0 * growth^(k+1).

    Returns a new state with the epoch counter advanced. The quadratic
    multiplier update is non-negative, so lambda is non-decreasing.
    """
    g = V / V0 - delta
    k = state.epoch
    new = replace(state)
    new.lam = state.lam + 2.0 * state.sigma * g**2
    new.epoch = k + 1
    new.sigma = state.sigma0 * growth ** (k + 1)
    return new


def tau_at(cfg: TrainConfig, epoch: int) -> float:
    if cfg.tau_ramp_epochs <= 0:
        return cfg.tau_end
    frac = min(1.0, epoch / cfg.tau_ramp_epochs)
    return cfg.tau_start + frac * (cfg.tau_end - cfg.tau_start)


def total_density_gradient(dC_drho: np.ndarray, V: float, V0: float,
                           delta: float, lam: float, sigma: float,
                           passive: np.ndarray | None = None) -> np.ndarray:
    """dL/drho = dC/drho + (2 lambda g + 4 sigma g^3) / V0 on free elements;
    passive elements stay at zero gradient."""
    g = V / V0 - delta
    vol_term = (2.0 * lam * g + 4.0 * sigma * g**3) / V0
    grad = dC_drho + vol_term
    if passive is not None:
        grad = grad.copy()
        grad[passive != mesh.PASSIVE_FREE] = 0.0
    return grad


def measure_volume(densities: np.ndarray, passive: np.ndarray | None):
    """(V, V0) over free elements; passive elements are excluded from both."""
    if passive is None:
        return float(densities.sum()), float(densities.size)
    free = passive == mesh.PASSIVE_FREE
    return float(densities[free].sum()), float(free.sum())


def check_convergence(history: list[HistoryRecord], delta: float,
                      compliance_tol: float = 0.003,
                      volume_tol: float = 0.01) -> bool:
    """True iff the last two records satisfy the step-to-step compliance and
    volume criteria."""
    if len(history) < 2:
        return False
    prev, cur = history[-2], history[-1]
    if prev.compliance == 0.0:
        return False
    dc = abs(cur.compliance - prev.compliance) / abs(prev.compliance)
    dv = abs(cur.volume - delta)
    return dc <= compliance_tol and dv <= volume_tol


def _fea_epoch(problem, boundary, densities, tau, state, solver_cfg, delta):
    """One FEA pass: solve, compliance, loss, total density gradient."""
    grid = problem.grid
    K = fem.assemble(grid, densities, tau, problem.material, boundary.passive)
    U, stats = fem.solve_displacement(
        K, boundary.force, boundary.fixed_dofs, solver_cfg, grid
    )
    C, dC = fem.compliance_and_gradient(
        densities, U, grid, tau, problem.material, boundary.passive
    )
    V, V0 = measure_volume(densities, boundary.passive)
    L = augmented_lagrangian(C, V, V0, delta, state.lam, state.sigma)
    dL = total_density_gradient(dC, V, V0, delta, state.lam, state.sigma,
                                boundary.passive)
    return L, C, V, V0, dL, stats


def train_single(problem: Problem, net_cfg: NetworkConfig,
                 train_cfg: TrainConfig,
                 solver_cfg: SolverConfig | None = None,
                 history_sink=None) -> TrainedModel:
    """Single-structure loop (oscillator network only)."""
    problem.validate()
    net_cfg.validate()
    train_cfg.validate()
    if solver_cfg is None:
        solver_cfg = SolverConfig()
    grid = problem.grid
    boundary = mesh.resolve_boundary(grid, problem.boundary)
    coords = mesh.sample_coordinates(grid, 1).points
    params = neural.init_oscillator(
        grid.ndim, net_cfg.width, net_cfg.depth, net_cfg.omega,
        seed=net_cfg.seed, alpha=net_cfg.alpha,
    )
    flat = neural.flatten_params(params)
    opt = neural.init_optimizer(flat, train_cfg.optimizer, train_cfg.learning_rate)
    state = TrainState(lam=train_cfg.lambda0, sigma0=train_cfg.sigma0,
                       tau=train_cfg.tau_start)
    delta = problem.volume_fraction
    history: list[HistoryRecord] = []

    for epoch in range(train_cfg.max_epochs):
        state.tau = tau_at(train_cfg, epoch)
        rho, cache = neural.forward_oscillator(params, coords)
        try:
            L, C, V, V0, dL, stats = _fea_epoch(
                problem, boundary, rho, state.tau, state, solver_cfg, delta
            )
        except SolverError as exc:
            raise SolverError(f"epoch {epoch}: {exc}", exc.stats) from exc
        if not np.isfinite(L):
            raise NumericalError(f"non-finite loss at epoch {epoch}: {L}")
        grads = neural.backward_oscillator(params, cache, dL)
        neural.optimizer_step(flat, neural.flatten_layer_grads(grads), opt)
        state = dual_update(state, V, V0, delta, train_cfg.sigma_growth)

        rec = HistoryRecord(epoch, 0, L, C, V / V0, state.lam, state.sigma,
                            stats.iterations)
        history.append(rec)
        if history_sink is not None:
            history_sink(rec)
        if state.converged_epoch is None and check_convergence(
            history, delta, train_cfg.compliance_tol, train_cfg.volume_tol
        ):
            state.converged_epoch = epoch
            if train_cfg.stop_on_convergence:
                break

    return TrainedModel(
        kind="single", params=params, grid=grid, history=history,
        states=[state], subtask_deltas=[delta],
        converged=state.converged_epoch is not None,
    )


def train_multi(problems: list[Problem], net_cfg: NetworkConfig,
                train_cfg: TrainConfig,
                solver_cfg: SolverConfig | None = None,
                history_sink=None) -> TrainedModel:
    """Multi-subtask loop (dual networks with per-subtask latent codes).

    Subtasks share the grid; each keeps its own boundary, volume fraction
    and dual state. The optimizer steps once per subtask visit.
    """
    if len(problems) < 2:
        raise InvalidSpecError("multi-structure training needs >= 2 subtasks")
    grid = problems[0].grid
    for p in problems:
        p.validate()
        if p.grid != grid:
            raise InvalidSpecError("all subtasks must share one grid")
    net_cfg.validate()
    train_cfg.validate()
    if solver_cfg is None:
        solver_cfg = SolverConfig()

    boundaries = [mesh.resolve_boundary(grid, p.boundary) for p in problems]
    coords = mesh.sample_coordinates(grid, 1).points
    dual = neural.init_dual(
        grid.ndim, net_cfg.width, net_cfg.depth, net_cfg.omega,
        net_cfg.latent_dim, len(problems), seed=net_cfg.seed,
        alpha=net_cfg.alpha,
    )
    flat = neural.flatten_params(dual)
    n_net = len(flat) - len(problems)  # latents occupy the trailing slots
    opt = neural.init_optimizer(flat, train_cfg.optimizer, train_cfg.learning_rate)
    states = [
        TrainState(lam=train_cfg.lambda0, sigma0=train_cfg.sigma0,
                   tau=train_cfg.tau_start)
        for _ in problems
    ]
    history: list[HistoryRecord] = []

    for epoch in range(train_cfg.max_epochs):
        tau = tau_at(train_cfg, epoch)
        for i, (problem, boundary) in enumerate(zip(problems, boundaries)):
            states[i].tau = tau
            rho, cache = neural.forward_modulated(dual, coords, dual.latents[i])
            try:
                L, C, V, V0, dL, stats = _fea_epoch(
                    problem, boundary, rho, tau, states[i], solver_cfg,
                    problem.volume_fraction,
                )
            except SolverError as exc:
                raise SolverError(
                    f"epoch {epoch}, subtask {i}: {exc}", exc.stats
                ) from exc
            if not np.isfinite(L):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, subtask {i}"
                )
            og, mg, zg = neural.backward_modulated(dual, cache, dL)
            grad_list = (
                neural.flatten_layer_grads(og)
                + neural.flatten_layer_grads(mg)
                + [
                    zg if j == i else np.zeros(net_cfg.latent_dim)
                    for j in range(len(problems))
                ]
            )
            neural.optimizer_step(flat, grad_list, opt)
            states[i] = dual_update(
                states[i], V, V0, problem.volume_fraction, train_cfg.sigma_growth
            )
            rec = HistoryRecord(epoch, i, L, C, V / V0, states[i].lam,
                                states[i].sigma, stats.iterations)
            history.append(rec)
            if history_sink is not None:
                history_sink(rec)
            if states[i].converged_epoch is None and check_convergence(
                [r for r in history if r.subtask == i],
                problem.volume_fraction,
                train_cfg.compliance_tol, train_cfg.volume_tol,
            ):
                states[i].converged_epoch = epoch

    return TrainedModel(
        kind="dual", params=dual, grid=grid, history=history, states=states,
        subtask_deltas=[p.volume_fraction for p in problems],
        converged=all(s.converged_epoch is not None for s in states),
    )


def infer(model: TrainedModel, scale: int = 1,
          latent: np.ndarray | None = None) -> np.ndarray:
    """Pure feedforward on the scale-times denser coordinate array.

    Returns the flat density field in refined-element order. Dual models
    require a latent (any point of the latent space)."""
    coords = mesh.sample_coordinates(model.grid, scale).points
    if model.kind == "dual":
        if latent is None:
            raise InvalidSpecError("dual model inference requires a latent code")
        rho, _ = neural.forward_modulated(model.params, coords, latent)
    else:
        if latent is not None:
            raise InvalidSpecError("single model takes no latent code")
        rho, _ = neural.forward_oscillator(model.params, coords)
    return rho


def zero_epoch_model(problem: Problem, net_cfg: NetworkConfig) -> TrainedModel:
    """Initialized single model with empty history (max_epochs=0 shortcut)."""
    params = neural.init_oscillator(
        problem.grid.ndim, net_cfg.width, net_cfg.depth, net_cfg.omega,
        seed=net_cfg.seed, alpha=net_cfg.alpha,
    )
    state = TrainState(lam=0.0, sigma0=1.0, tau=1.5)
    return TrainedModel("single", params, problem.grid, [], [state],
                        [problem.volume_fraction], False)
