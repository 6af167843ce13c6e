"""Portable weight archive: self-describing binary serialization of a trained
model (oscillator or dual networks plus latent table), loadable without the
originating problem spec. Little-endian throughout.

Layout (version 1):
  magic 'NSTW' | u32 version | u8 kind (0 single, 1 dual) | u8 input_dim
  u8 latent_dim | u8 rank | u64*rank grid dims | f64*rank element size
  f64 omega | f64 alpha
  u32 n_layers | per layer: u32 out, u32 in
  per layer payload: f64 W row-major, f64 b
  dual only:
    u32 n_mod_layers | per layer: u32 out, u32 in | payloads as above
    u32 n_latents | per latent: f64 delta (NaN if unset) | f64*latent_dim z
"""

from __future__ import annotations

import math
import struct

import numpy as np

from . import mesh, neural
from .errors import ArchiveFormatError
from .export import atomic_write
from .optimize import TrainedModel

MAGIC = b"NSTW"
VERSION = 1


def _pack_layers(layers) -> tuple[bytes, bytes]:
    shapes = struct.pack("<I", len(layers))
    payload = b""
    for w, b in layers:
        shapes += struct.pack("<II", w.shape[0], w.shape[1])
        payload += np.ascontiguousarray(w, dtype="<f8").tobytes()
        payload += np.ascontiguousarray(b, dtype="<f8").tobytes()
    return shapes, payload


def save_weights(model: TrainedModel, path):
    params = model.params
    osc = params.oscillator if model.kind == "dual" else params
    kind = 1 if model.kind == "dual" else 0
    latent_dim = params.latent_dim if kind else 0
    grid = model.grid
    head = MAGIC + struct.pack(
        "<IBBBB", VERSION, kind, osc.input_dim, latent_dim, grid.ndim
    )
    head += struct.pack(f"<{grid.ndim}Q", *grid.dims)
    head += struct.pack(f"<{grid.ndim}d", *grid.element_size)
    head += struct.pack("<dd", osc.omega, osc.alpha)
    shapes, payload = _pack_layers(osc.layers)
    body = shapes + payload
    if kind:
        mshapes, mpayload = _pack_layers(params.modulator)
        body += mshapes + mpayload
        n_lat = params.latents.shape[0]
        body += struct.pack("<I", n_lat)
        deltas = model.subtask_deltas or [math.nan] * n_lat
        for i in range(n_lat):
            d = deltas[i] if i < len(deltas) else math.nan
            body += struct.pack("<d", d if d is not None else math.nan)
            body += np.ascontiguousarray(params.latents[i], dtype="<f8").tobytes()
    atomic_write(path, head + body)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def unpack(self, fmt):
        size = struct.calcsize(fmt)
        if self.off + size > len(self.data):
            raise ArchiveFormatError(f"{self.path}: truncated archive")
        out = struct.unpack_from(fmt, self.data, self.off)
        self.off += size
        return out

    def floats(self, n) -> np.ndarray:
        size = 8 * n
        if self.off + size > len(self.data):
            raise ArchiveFormatError(f"{self.path}: truncated archive")
        out = np.frombuffer(self.data, dtype="<f8", count=n, offset=self.off)
        self.off += size
        return out.astype(float)


def _read_layers(r: _Reader):
    (n_layers,) = r.unpack("<I")
    if n_layers == 0 or n_layers > 1024:
        raise ArchiveFormatError(f"{r.path}: implausible layer count {n_layers}")
    shapes = [r.unpack("<II") for _ in range(n_layers)]
    layers = []
    for out_dim, in_dim in shapes:
        w = r.floats(out_dim * in_dim).reshape(out_dim, in_dim)
        b = r.floats(out_dim)
        layers.append((w, b))
    return layers


def load_weights(path) -> TrainedModel:
    """Load an archive into a TrainedModel ready for inference (no history)."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 8 or data[:4] != MAGIC:
        raise ArchiveFormatError(f"{path}: not a weight archive")
    r = _Reader(data, path)
    r.off = 4
    (version, kind, input_dim, latent_dim, rank) = r.unpack("<IBBBB")
    if version != VERSION:
        raise ArchiveFormatError(f"{path}: unsupported archive version {version}")
    if kind not in (0, 1) or rank not in (2, 3) or input_dim != rank:
        raise ArchiveFormatError(f"{path}: inconsistent archive header")
    dims = r.unpack(f"<{rank}Q")
    esize = r.unpack(f"<{rank}d")
    omega, alpha = r.unpack("<dd")
    grid = mesh.build_grid(dims, esize)
    layers = _read_layers(r)
    chain_ok = all(
        layers[i][0].shape[0] == layers[i + 1][0].shape[1]
        for i in range(len(layers) - 1)
    )
    if not chain_ok or layers[0][0].shape[1] != input_dim:
        raise ArchiveFormatError(f"{path}: layer dimensions do not chain")
    osc = neural.OscillatorParams(layers=layers, omega=omega, alpha=alpha)
    if kind == 0:
        if r.off != len(data):
            raise ArchiveFormatError(f"{path}: trailing bytes in archive")
        return TrainedModel("single", osc, grid, [], [], [], False)
    modulator = _read_layers(r)
    widths = osc.hidden_widths
    if len(modulator) != len(widths) or any(
        m[0].shape[0] != w for m, w in zip(modulator, widths)
    ):
        raise ArchiveFormatError(f"{path}: modulator widths do not match oscillator")
    (n_lat,) = r.unpack("<I")
    deltas, latents = [], []
    for _ in range(n_lat):
        (d,) = r.unpack("<d")
        deltas.append(None if math.isnan(d) else d)
        latents.append(r.floats(latent_dim))
    if r.off != len(data):
        raise ArchiveFormatError(f"{path}: trailing bytes in archive")
    dual = neural.DualParams(
        oscillator=osc, modulator=modulator,
        latents=np.array(latents).reshape(n_lat, latent_dim),
    )
    return TrainedModel("dual", dual, grid, [], [], deltas, False)
