"""Density and mesh exporters: pgm8 raster, raw64 binary, csv, marching
squares contours (2D polylines) and marching cubes STL (3D).

All writers go through a temp file plus atomic rename, so no partial output
survives an error. All formats are little-endian and byte-deterministic.
"""

from __future__ import annotations

import os
import struct
import tempfile
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ArchiveFormatError, InvalidSpecError, ShapeError

RAW64_MAGIC = b"NSTO"
RAW64_VERSION = 1


@dataclass
class DensityField:
    """Flat density values in element order (x fastest) plus grid shape."""

    values: np.ndarray
    dims: tuple[int, ...]
    scale: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        self.dims = tuple(int(d) for d in self.dims)
        if self.values.size != int(np.prod(self.dims)):
            raise ShapeError(
                f"{self.values.size} values do not fill dims {self.dims}"
            )

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def as_array(self) -> np.ndarray:
        """Reshape to (…, ny, nx) with x fastest."""
        return self.values.reshape(self.dims[::-1])


def atomic_write(path, data: bytes):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".nsto-tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_pgm8(field: DensityField, path):
    """Binary PGM, material dark: pixel = 255 - round(255 * rho)."""
    if field.ndim != 2:
        raise InvalidSpecError(
            "pgm8 export supports 2D fields only; slice 3D fields first"
        )
    arr = field.as_array()
    pixels = 255 - np.rint(np.clip(arr, 0.0, 1.0) * 255).astype(np.uint8)
    pixels = pixels[::-1]  # y axis points up; raster rows go top-down
    ny, nx = pixels.shape
    header = f"P5\n{nx} {ny}\n255\n".encode()
    atomic_write(path, header + pixels.tobytes())


def slice_3d(field: DensityField, axis: int = 2, index: int | None = None) -> DensityField:
    """Extract a 2D slice of a 3D field (default: middle z layer)."""
    if field.ndim != 3:
        raise InvalidSpecError("slice_3d needs a 3D field")
    arr = field.as_array()  # (nz, ny, nx)
    if index is None:
        index = field.dims[axis] // 2
    arr = np.moveaxis(arr, 2 - axis, 0)[index]
    dims = tuple(d for a, d in enumerate(field.dims) if a != axis)
    return DensityField(arr.ravel(), dims, field.scale)


def write_raw64(field: DensityField, path):
    """magic 'NSTO', u32 version, u8 rank, u64 dims..., u32 scale, f64 payload."""
    header = RAW64_MAGIC + struct.pack("<IB", RAW64_VERSION, field.ndim)
    header += struct.pack(f"<{field.ndim}Q", *field.dims)
    header += struct.pack("<I", field.scale)
    payload = field.values.astype("<f8").tobytes()
    atomic_write(path, header + payload)


def read_raw64(path) -> DensityField:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 9 or data[:4] != RAW64_MAGIC:
        raise ArchiveFormatError(f"{path}: not a raw64 density file")
    version, rank = struct.unpack_from("<IB", data, 4)
    if version != RAW64_VERSION:
        raise ArchiveFormatError(f"{path}: unsupported raw64 version {version}")
    off = 9
    dims = struct.unpack_from(f"<{rank}Q", data, off)
    off += 8 * rank
    (scale,) = struct.unpack_from("<I", data, off)
    off += 4
    n = int(np.prod(dims))
    payload = data[off:]
    if len(payload) != 8 * n:
        raise ArchiveFormatError(
            f"{path}: payload has {len(payload)} bytes, expected {8 * n}"
        )
    values = np.frombuffer(payload, dtype="<f8").astype(float)
    return DensityField(values, dims, scale)


def write_csv(field: DensityField, path):
    lines = ["element,density"]
    lines += [f"{i},{v:.17g}" for i, v in enumerate(field.values)]
    atomic_write(path, ("\n".join(lines) + "\n").encode())


def export_density(field: DensityField, fmt: str, path):
    if fmt == "pgm8":
        write_pgm8(field, path)
    elif fmt == "raw64":
        write_raw64(field, path)
    elif fmt == "csv":
        write_csv(field, path)
    else:
        raise InvalidSpecError(f"unknown density format {fmt!r}")


# ---------------------------------------------------------------------------
# contour extraction

_EDGE_ENDPOINTS = {
    # edge id -> (corner a, corner b); corners 0..3 = (0,0),(1,0),(1,1),(0,1)
    0: (0, 1),  # bottom
    1: (1, 2),  # right
    2: (3, 2),  # top
    3: (0, 3),  # left
}

_CORNER_OFFSETS = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]

# case index bit k set <=> corner k >= threshold; entry: list of (edge, edge)
_MS_SEGMENTS = {
    0: [],
    1: [(3, 0)],
    2: [(0, 1)],
    3: [(3, 1)],
    4: [(1, 2)],
    5: None,  # saddle
    6: [(0, 2)],
    7: [(3, 2)],
    8: [(2, 3)],
    9: [(2, 0)],
    10: None,  # saddle
    11: [(2, 1)],
    12: [(1, 3)],
    13: [(1, 0)],
    14: [(0, 3)],
    15: [],
}


def marching_squares(values2d: np.ndarray, threshold: float):
    """Iso-contour segments of a cell-centered 2D scalar field.

    values2d is (ny, nx); sample positions are (x + 0.5, y + 0.5).
    Returns a list of ((x1, y1), (x2, y2)) segments, inside on the left.
    Saddle cells are resolved by the cell-center average.
    """
    v = np.asarray(values2d, dtype=float)
    ny, nx = v.shape
    segments = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            corners = (v[j, i], v[j, i + 1], v[j + 1, i + 1], v[j + 1, i])
            case = sum(1 << k for k, c in enumerate(corners) if c >= threshold)
            entry = _MS_SEGMENTS[case]
            if entry is None:
                center_inside = sum(corners) / 4.0 >= threshold
                if case == 5:
                    entry = [(3, 2), (1, 0)] if center_inside else [(3, 0), (1, 2)]
                else:
                    entry = [(0, 1), (2, 3)] if center_inside else [(0, 3), (2, 1)]
            for e_from, e_to in entry:
                p1 = _edge_point(e_from, corners, threshold)
                p2 = _edge_point(e_to, corners, threshold)
                ox, oy = i + 0.5, j + 0.5
                segments.append(((ox + p1[0], oy + p1[1]), (ox + p2[0], oy + p2[1])))
    return segments


def _edge_point(edge, corners, threshold):
    a, b = _EDGE_ENDPOINTS[edge]
    va, vb = corners[a], corners[b]
    t = 0.5 if vb == va else (threshold - va) / (vb - va)
    t = min(max(t, 0.0), 1.0)
    ax, ay = _CORNER_OFFSETS[a]
    bx, by = _CORNER_OFFSETS[b]
    return (ax + t * (bx - ax), ay + t * (by - ay))


def _boundary_closure(values2d: np.ndarray, threshold: float):
    """Segments along the domain boundary where material meets it, so that
    contours around boundary-touching material close into loops."""
    v = np.asarray(values2d, dtype=float)
    ny, nx = v.shape
    segs = []

    def emit_run(line_vals, to_xy):
        # line of cell-center samples along one boundary side; endpoints in
        # sample-index units so corners coincide with adjacent sides' runs
        inside = line_vals >= threshold
        k = 0
        n = len(line_vals)
        while k < n:
            if not inside[k]:
                k += 1
                continue
            start = k
            while k < n and inside[k]:
                k += 1
            if start > 0:  # interpolate to the crossing, as marching squares does
                va, vb = line_vals[start - 1], line_vals[start]
                a = (start - 1) + (threshold - va) / (vb - va)
            else:
                a = 0.0
            if k < n:
                va, vb = line_vals[k - 1], line_vals[k]
                b = (k - 1) + (threshold - va) / (vb - va)
            else:
                b = float(n - 1)
            segs.append((to_xy(a), to_xy(b)))

    emit_run(v[0, :], lambda t: (t + 0.5, 0.5))
    emit_run(v[-1, :], lambda t: (t + 0.5, ny - 0.5))
    emit_run(v[:, 0], lambda t: (0.5, t + 0.5))
    emit_run(v[:, -1], lambda t: (nx - 0.5, t + 0.5))
    return segs


def chain_segments(segments, tol=1e-9):
    """Join segments into polylines; returns (closed loops, open paths)."""
    def key(p):
        return (round(p[0] / tol) * tol, round(p[1] / tol) * tol)

    remaining = {i: s for i, s in enumerate(segments)}
    by_start: dict = {}
    for i, (a, b) in remaining.items():
        by_start.setdefault(key(a), []).append(i)
        by_start.setdefault(key(b), []).append(i)
    loops, paths = [], []
    while remaining:
        i, (a, b) = next(iter(remaining.items()))
        del remaining[i]
        chain = [a, b]
        grew = True
        while grew:
            grew = False
            for endpoint, append in ((chain[-1], True), (chain[0], False)):
                for j in by_start.get(key(endpoint), []):
                    if j not in remaining:
                        continue
                    sa, sb = remaining[j]
                    if key(sa) == key(endpoint):
                        nxt = sb
                    elif key(sb) == key(endpoint):
                        nxt = sa
                    else:
                        continue
                    del remaining[j]
                    if append:
                        chain.append(nxt)
                    else:
                        chain.insert(0, nxt)
                    grew = True
                    break
                if grew:
                    break
        if key(chain[0]) == key(chain[-1]) and len(chain) > 2:
            loops.append(chain[:-1])
        else:
            paths.append(chain)
    return loops, paths


def export_contour(field: DensityField, threshold: float = 0.5, path=None,
                   close_boundary: bool = False):
    """2D: closed polylines in a plain-text format (one 'loop'/'path' per
    line, coordinates in element units of the field's own grid).
    3D: binary little-endian STL via marching cubes.
    """
    if not 0.0 < threshold < 1.0:
        raise InvalidSpecError(f"threshold must be in (0, 1), got {threshold}")
    if field.ndim == 2:
        v = field.as_array()
        segments = marching_squares(v, threshold)
        if close_boundary:
            segments += _boundary_closure(v, threshold)
        if not segments:
            warnings.warn("field is constant on one side of the threshold; "
                          "writing an empty contour file")
        loops, paths = chain_segments(segments)
        lines = [f"# nsto contour threshold={threshold:.17g}"]
        for loop in loops:
            coords = " ".join(f"{x:.17g},{y:.17g}" for x, y in loop)
            lines.append(f"loop {coords}")
        for p in paths:
            coords = " ".join(f"{x:.17g},{y:.17g}" for x, y in p)
            lines.append(f"path {coords}")
        atomic_write(path, ("\n".join(lines) + "\n").encode())
        return loops, paths
    return _export_stl(field, threshold, path)


def _export_stl(field: DensityField, threshold: float, path):
    from skimage import measure

    vol = field.as_array()  # (nz, ny, nx)
    padded = np.pad(vol, 1, constant_values=0.0)
    if padded.max() < threshold or padded.min() >= threshold:
        warnings.warn("field is constant on one side of the threshold; "
                      "writing an empty STL")
        verts = np.zeros((0, 3))
        faces = np.zeros((0, 3), dtype=int)
        normals = np.zeros((0, 3))
    else:
        verts, faces, normals, _ = measure.marching_cubes(padded, level=threshold)
        # back to field coordinates: padding shifted samples by one cell
        verts = verts[:, ::-1] - 0.5  # (z,y,x) -> (x,y,z), centers at +0.5
    tri = verts[faces]  # (n, 3, 3)
    n = tri.shape[0]
    buf = bytearray(b"nsto marching-cubes export".ljust(80, b"\0"))
    buf += struct.pack("<I", n)
    for k in range(n):
        a, b, c = tri[k]
        nvec = np.cross(b - a, c - a)
        norm = np.linalg.norm(nvec)
        nvec = nvec / norm if norm > 0 else nvec
        buf += struct.pack("<3f", *nvec.astype(np.float32))
        for p in (a, b, c):
            buf += struct.pack("<3f", *p.astype(np.float32))
        buf += struct.pack("<H", 0)
    atomic_write(path, bytes(buf))
    return verts, faces
