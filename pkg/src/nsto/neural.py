"""Sinusoidal oscillator network and ReLU modulator with hand-written
forward/backward passes, plus Rprop (iRprop-) and Adam updates.

The oscillator maps normalized coordinates to material density through
sin-activated hidden layers and an arctan output squash
    rho = arctan(alpha * pre) / pi + 0.5  in (0, 1).
The modulator maps a per-subtask latent code to one multiplicative gain
vector per hidden layer; the final linear layer is not modulated.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import NumericalError, ShapeError


@dataclass
class OscillatorParams:
    layers: list[tuple[np.ndarray, np.ndarray]]  # (W: out x in, b: out)
    omega: float
    alpha: float = 0.1

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def hidden_widths(self) -> list[int]:
        return [w.shape[0] for w, _ in self.layers[:-1]]


@dataclass
class DualParams:
    oscillator: OscillatorParams
    modulator: list[tuple[np.ndarray, np.ndarray]]
    latents: np.ndarray  # (n_subtasks, latent_dim)

    @property
    def latent_dim(self) -> int:
        return self.latents.shape[1]


@dataclass
class ActivationCache:
    """Per-layer pre-activations/activations of one forward batch."""

    inputs: np.ndarray
    pre: list[np.ndarray]
    act: list[np.ndarray]  # hidden activations only (post-modulation if dual)
    # dual-network extras
    latent: np.ndarray | None = None
    mod_pre: list[np.ndarray] = field(default_factory=list)
    mod_act: list[np.ndarray] = field(default_factory=list)
    sin: list[np.ndarray] = field(default_factory=list)  # un-modulated sin outputs


def init_oscillator(input_dim: int, width: int, depth: int, omega: float,
                    seed: int = 0, output_dim: int = 1,
                    alpha: float = 0.1) -> OscillatorParams:
    """Seeded init. First-layer weights follow the sinusoidal-network
    convention omega * U(-1/fan_in, 1/fan_in); deeper layers
    U(-sqrt(6/fan_in), sqrt(6/fan_in)); biases U(-1/sqrt(fan_in), ...)."""
    if width < 1 or depth < 2 or omega <= 0:
        raise ShapeError(
            f"need width >= 1, depth >= 2, omega > 0; got {width}, {depth}, {omega}"
        )
    rng = np.random.default_rng(seed)
    sizes = [input_dim] + [width] * (depth - 1) + [output_dim]
    layers = []
    for i in range(depth):
        fan_in = sizes[i]
        if i == 0:
            w = omega * rng.uniform(-1.0 / fan_in, 1.0 / fan_in, (sizes[1], fan_in))
        else:
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, (sizes[i + 1], fan_in))
        b = rng.uniform(-1.0, 1.0, sizes[i + 1]) / np.sqrt(fan_in)
        layers.append((w, b))
    return OscillatorParams(layers=layers, omega=float(omega), alpha=float(alpha))


def init_dual(input_dim: int, width: int, depth: int, omega: float,
              latent_dim: int, n_subtasks: int, seed: int = 0,
              output_dim: int = 1, alpha: float = 0.1) -> DualParams:
    """Oscillator plus a matching-width ReLU modulator and seeded normal
    latent codes, one per subtask."""
    osc = init_oscillator(input_dim, width, depth, omega, seed, output_dim, alpha)
    rng = np.random.default_rng(seed + 1)
    widths = osc.hidden_widths
    modulator = []
    fan_in = latent_dim
    for w_out in widths:
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, (w_out, fan_in))
        b = rng.uniform(-bound, bound, w_out)
        modulator.append((w, b))
        fan_in = w_out
    latents = rng.standard_normal((n_subtasks, latent_dim))
    # place the first latent axis at evenly spaced quantiles of the standard
    # normal instead of raw draws: subtask index and latent position then
    # agree and the latent axis is covered without clusters or outliers,
    # which keeps interpolated codes close to trained ones
    latents[:, 0] = ndtri((np.arange(n_subtasks) + 1.0) / (n_subtasks + 1.0))
    return DualParams(oscillator=osc, modulator=modulator, latents=latents)


def _check_finite(layers):
    for w, b in layers:
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NumericalError("non-finite network parameters")


def _squash(pre: np.ndarray, alpha: float) -> np.ndarray:
    return np.arctan(alpha * pre) / np.pi + 0.5


def _squash_grad(pre: np.ndarray, alpha: float) -> np.ndarray:
    return alpha / (np.pi * (1.0 + (alpha * pre) ** 2))


def forward_oscillator(params: OscillatorParams, coords: np.ndarray):
    """Full-batch forward pass. Returns (densities, cache); densities are
    squeezed to (n,) for single-output networks."""
    _check_finite(params.layers)
    x = np.asarray(coords, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(f"coords shape {x.shape} does not match input dim {params.input_dim}")
    pre, act = [], []
    h = x
    for w, b in params.layers[:-1]:
        z = h @ w.T + b
        pre.append(z)
        h = np.sin(z)
        act.append(h)
    w, b = params.layers[-1]
    z = h @ w.T + b
    pre.append(z)
    rho = _squash(z, params.alpha)
    cache = ActivationCache(inputs=x, pre=pre, act=act)
    return (rho[:, 0] if params.output_dim == 1 else rho), cache


def backward_oscillator(params: OscillatorParams, cache: ActivationCache,
                        dL_drho: np.ndarray):
    """Gradients of a scalar loss wrt every weight/bias given dL/drho."""
    g = np.asarray(dL_drho, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    n = cache.inputs.shape[0]
    if g.shape != (n, params.output_dim):
        raise ShapeError(f"dL_drho shape {g.shape} != ({n}, {params.output_dim})")
    grads = [None] * params.depth
    g = g * _squash_grad(cache.pre[-1], params.alpha)
    for i in range(params.depth - 1, -1, -1):
        w, _ = params.layers[i]
        h_in = cache.act[i - 1] if i > 0 else cache.inputs
        grads[i] = (g.T @ h_in, g.sum(axis=0))
        if i > 0:
            g = (g @ w) * np.cos(cache.pre[i - 1])
    return grads


def modulator_gains(dual: DualParams, z: np.ndarray):
    """ReLU modulator forward on a single latent; returns (pre, act) lists."""
    a = np.asarray(z, dtype=float).ravel()
    if a.shape != (dual.latent_dim,):
        raise ShapeError(f"latent shape {a.shape} != ({dual.latent_dim},)")
    pre, act = [], []
    for w, b in dual.modulator:
        zp = w @ a + b
        pre.append(zp)
        a = np.maximum(zp, 0.0)
        act.append(a)
    return pre, act


def forward_modulated(dual: DualParams, coords: np.ndarray, z: np.ndarray):
    """Dual-network forward: oscillator hidden sin outputs are multiplied
    elementwise by the modulator gains; the output layer is unmodulated."""
    osc = dual.oscillator
    _check_finite(osc.layers)
    _check_finite(dual.modulator)
    x = np.asarray(coords, dtype=float)
    if x.ndim != 2 or x.shape[1] != osc.input_dim:
        raise ShapeError(f"coords shape {x.shape} does not match input dim {osc.input_dim}")
    mod_pre, mod_act = modulator_gains(dual, z)
    pre, act, sins = [], [], []
    h = x
    for (w, b), psi in zip(osc.layers[:-1], mod_act):
        zp = h @ w.T + b
        pre.append(zp)
        s = np.sin(zp)
        sins.append(s)
        h = s * psi[None, :]
        act.append(h)
    w, b = osc.layers[-1]
    zp = h @ w.T + b
    pre.append(zp)
    rho = _squash(zp, osc.alpha)
    cache = ActivationCache(
        inputs=x, pre=pre, act=act,
        latent=np.asarray(z, dtype=float).ravel().copy(),
        mod_pre=mod_pre, mod_act=mod_act, sin=sins,
    )
    return (rho[:, 0] if osc.output_dim == 1 else rho), cache


def backward_modulated(dual: DualParams, cache: ActivationCache,
                       dL_drho: np.ndarray):
    """Returns (oscillator grads, modulator grads, latent grad)."""
    osc = dual.oscillator
    g = np.asarray(dL_drho, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    n = cache.inputs.shape[0]
    if g.shape != (n, osc.output_dim):
        raise ShapeError(f"dL_drho shape {g.shape} != ({n}, {osc.output_dim})")
    depth = osc.depth
    osc_grads = [None] * depth
    d_psi = [None] * (depth - 1)

    g = g * _squash_grad(cache.pre[-1], osc.alpha)
    w_last, _ = osc.layers[-1]
    osc_grads[-1] = (g.T @ cache.act[-1], g.sum(axis=0))
    dh = g @ w_last
    for i in range(depth - 2, -1, -1):
        psi = cache.mod_act[i]
        s = cache.sin[i]
        d_psi[i] = (dh * s).sum(axis=0)
        gp = dh * psi[None, :] * np.cos(cache.pre[i])
        h_in = cache.act[i - 1] if i > 0 else cache.inputs
        osc_grads[i] = (gp.T @ h_in, gp.sum(axis=0))
        if i > 0:
            dh = gp @ osc.layers[i][0]

    mod_grads = [None] * len(dual.modulator)
    da = None
    for i in range(len(dual.modulator) - 1, -1, -1):
        total = d_psi[i] if da is None else d_psi[i] + da
        gz = total * (cache.mod_pre[i] > 0)
        a_in = cache.mod_act[i - 1] if i > 0 else cache.latent
        mod_grads[i] = (np.outer(gz, a_in), gz)
        da = dual.modulator[i][0].T @ gz
    return osc_grads, mod_grads, da


# ---------------------------------------------------------------------------
# optimizers


@dataclass
class OptimizerState:
    kind: str  # 'rprop' or 'adam'
    learning_rate: float
    step: int = 0
    slots: list[dict] = field(default_factory=list)

    # Rprop (iRprop- variant) constants
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    delta_min: float = 1e-6

    @property
    def delta_max(self) -> float:
        return 50.0 * self.learning_rate


def init_optimizer(param_list: list[np.ndarray], kind: str = "rprop",
                   learning_rate: float = 1e-4) -> OptimizerState:
    state = OptimizerState(kind=kind, learning_rate=learning_rate)
    for p in param_list:
        if kind == "rprop":
            state.slots.append(
                {"delta": np.full(p.shape, learning_rate), "prev": np.zeros(p.shape)}
            )
        elif kind == "adam":
            state.slots.append({"m": np.zeros(p.shape), "v": np.zeros(p.shape)})
        else:
            raise ShapeError(f"unknown optimizer kind {kind!r}")
    return state


def optimizer_step(param_list: list[np.ndarray], grad_list, state: OptimizerState):
    """In-place parameter update. Rprop follows iRprop-: on a gradient sign
    flip the step size shrinks and the stored gradient is zeroed, so no step
    is taken for that entry this round; zero gradients never move weights."""
    if len(param_list) != len(grad_list) or len(param_list) != len(state.slots):
        raise ShapeError("parameter/gradient/state lists do not match")
    state.step += 1
    if state.kind == "rprop":
        for p, g, slot in zip(param_list, grad_list, state.slots):
            g = np.asarray(g, dtype=float)
            prod = g * slot["prev"]
            grew = prod > 0
            flipped = prod < 0
            slot["delta"][grew] = np.minimum(
                slot["delta"][grew] * state.eta_plus, state.delta_max
            )
            slot["delta"][flipped] = np.maximum(
                slot["delta"][flipped] * state.eta_minus, state.delta_min
            )
            g = g.copy()
            g[flipped] = 0.0
            p -= np.sign(g) * slot["delta"]
            slot["prev"] = g
    else:
        b1, b2, eps = 0.9, 0.999, 1e-8
        t = state.step
        for p, g, slot in zip(param_list, grad_list, state.slots):
            g = np.asarray(g, dtype=float)
            slot["m"] = b1 * slot["m"] + (1 - b1) * g
            slot["v"] = b2 * slot["v"] + (1 - b2) * g * g
            mhat = slot["m"] / (1 - b1**t)
            vhat = slot["v"] / (1 - b2**t)
            p -= state.learning_rate * mhat / (np.sqrt(vhat) + eps)


def flatten_params(params) -> list[np.ndarray]:
    """References (not copies) to every trainable array, in a stable order."""
    if isinstance(params, OscillatorParams):
        out = []
        for w, b in params.layers:
            out.extend([w, b])
        return out
    if isinstance(params, DualParams):
        out = flatten_params(params.oscillator)
        for w, b in params.modulator:
            out.extend([w, b])
        out.extend([params.latents[i] for i in range(params.latents.shape[0])])
        return out
    raise ShapeError(f"cannot flatten {type(params).__name__}")


def flatten_layer_grads(grads) -> list[np.ndarray]:
    out = []
    for dw, db in grads:
        out.extend([dw, db])
    return out


# ---------------------------------------------------------------------------
# image fitting (frequency-tuning harness)


def fit_image(params: OscillatorParams, target: np.ndarray, epochs: int,
              optimizer: str = "rprop", learning_rate: float = 1e-4):
    """Fit an image raster with mean-squared error using the same
    forward/backward machinery (Atan squash retained on the outputs).

    target: (H, W) grayscale or (H, W, C) with values in [0, 1].
    Returns (fitted params copy, PSNR-per-epoch list).
    """
    from . import mesh  # local import; mesh has no dependency on neural

    target = np.asarray(target, dtype=float)
    if target.ndim == 2:
        channels = 1
        flat = target.reshape(-1, 1)
    elif target.ndim == 3:
        channels = target.shape[2]
        flat = target.reshape(-1, channels)
    else:
        raise ShapeError(f"target raster must be 2D or 3D, got shape {target.shape}")
    if params.output_dim != channels:
        raise ShapeError(
            f"network has {params.output_dim} outputs but target has {channels} channels"
        )
    h_img, w_img = target.shape[0], target.shape[1]
    grid = mesh.build_grid((w_img, h_img))
    coords = mesh.sample_coordinates(grid, 1).points

    params = copy.deepcopy(params)
    flat_params = flatten_params(params)
    state = init_optimizer(flat_params, optimizer, learning_rate)
    n_values = flat.size
    history = []
    for _ in range(int(epochs)):
        rho, cache = forward_oscillator(params, coords)
        rho2 = rho.reshape(-1, channels)
        err = rho2 - flat
        dL = 2.0 * err / n_values
        grads = backward_oscillator(params, cache, dL)
        optimizer_step(flat_params, flatten_layer_grads(grads), state)
        rho_new, _ = forward_oscillator(params, coords)
        mse = float(np.mean((rho_new.reshape(-1, channels) - flat) ** 2))
        history.append(-10.0 * np.log10(max(mse, 1e-300)))
    return params, history
