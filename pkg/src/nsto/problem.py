"""YAML problem/config parsing with strict validation.

Grammar (YAML mapping, all sections optional except `problem`):

  problem:
    dims: [nx, ny] or [nx, ny, nz]
    element_size: scalar or per-axis list        (default 1.0)
    material: {youngs_modulus, poisson_ratio, e_min}
    volume_fraction: float in (0, 1]
    fixed:   [{box: [lo, hi], dofs: "x"|"y"|"z"|"xy"|...}, ...]
    loads:   [{box: [lo, hi], force: [fx, fy(, fz)]}, ...]
    passive: [{box: [lo, hi], state: "void"|"solid"}, ...]
  network: {width, depth, omega, alpha, seed, latent_dim}
  train:   {max_epochs, optimizer, learning_rate, sigma0, sigma_growth,
            lambda0, tau_start, tau_end, tau_ramp_epochs,
            compliance_tol, volume_tol, stop_on_convergence}
  solver:  {tolerance, max_iterations, preconditioner}
  simp:    {penal, filter_radius, move, oc_tolerance, max_iterations}
  subtasks: [{volume_fraction?, loads?, fixed?}, ...]   # multi mode

Unknown keys are rejected; every validation error is reported, not just
the first.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import yaml

from . import fem, mesh
from .errors import InvalidSpecError
from .linsolve import SolverConfig
from .optimize import NetworkConfig, Problem, TrainConfig
from .simp import SimpConfig

_AXES = "xyz"


class SpecValidationError(InvalidSpecError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid problem spec:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class FullSpec:
    problem: Problem
    subtasks: tuple[Problem, ...]  # empty for single mode
    network: NetworkConfig
    train: TrainConfig
    solver: SolverConfig
    simp: SimpConfig

    @property
    def is_multi(self) -> bool:
        return len(self.subtasks) > 0


def _take(section: dict, key, default, errors, where, convert=None):
    if key not in section:
        return default
    value = section.pop(key)
    if convert is not None:
        try:
            return convert(value)
        except (TypeError, ValueError) as exc:
            errors.append(f"{where}.{key}: {exc}")
            return default
    return value


def _reject_unknown(section: dict, where, errors):
    for key in section:
        errors.append(f"{where}: unknown key {key!r}")


def _parse_box(raw, ndim, where, errors):
    try:
        lo, hi = raw
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
    except (TypeError, ValueError):
        errors.append(f"{where}.box: expected [[lo...], [hi...]], got {raw!r}")
        return None
    if len(lo) != ndim or len(hi) != ndim:
        errors.append(f"{where}.box: needs {ndim} coordinates per corner")
        return None
    if any(a > b for a, b in zip(lo, hi)):
        errors.append(f"{where}.box: lo must be <= hi componentwise")
        return None
    return mesh.Box(lo, hi)


def _parse_regions(raw, ndim, where, errors):
    fixed, loads, passive = [], [], []
    for kind, out in (("fixed", fixed), ("loads", loads), ("passive", passive)):
        items = raw.pop(kind, [])
        if items is None:
            items = []
        if not isinstance(items, list):
            errors.append(f"{where}.{kind}: expected a list")
            continue
        for i, item in enumerate(items):
            here = f"{where}.{kind}[{i}]"
            if not isinstance(item, dict):
                errors.append(f"{here}: expected a mapping")
                continue
            item = dict(item)
            box = _parse_box(item.pop("box", None), ndim, here, errors)
            if kind == "fixed":
                dofs_raw = item.pop("dofs", "".join(_AXES[:ndim]))
                axes = []
                for ch in str(dofs_raw):
                    if ch not in _AXES[:ndim]:
                        errors.append(f"{here}.dofs: invalid axis {ch!r}")
                    else:
                        axes.append(_AXES.index(ch))
                if box is not None and axes:
                    out.append(mesh.FixedRegion(box, tuple(axes)))
            elif kind == "loads":
                force = item.pop("force", None)
                try:
                    force = tuple(float(v) for v in force)
                    ok = len(force) == ndim
                except (TypeError, ValueError):
                    ok = False
                if not ok:
                    errors.append(f"{here}.force: expected {ndim} components")
                elif box is not None:
                    out.append(mesh.LoadRegion(box, force))
            else:
                state = item.pop("state", None)
                if state not in ("void", "solid"):
                    errors.append(f"{here}.state: must be 'void' or 'solid'")
                elif box is not None:
                    out.append(mesh.PassiveRegion(box, state))
            _reject_unknown(item, here, errors)
    return tuple(fixed), tuple(loads), tuple(passive)


def _volume_fraction(value, where, errors):
    try:
        v = float(value)
    except (TypeError, ValueError):
        errors.append(f"{where}.volume_fraction: not a number: {value!r}")
        return 0.5
    if not 0.0 < v <= 1.0:
        errors.append(f"{where}.volume_fraction: must be in (0, 1], got {v}")
        return 0.5
    return v


def _build_section(raw, cls, where, errors, casts):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in raw:
            value = raw.pop(f.name)
            cast = casts.get(f.name)
            try:
                kwargs[f.name] = cast(value) if cast else value
            except (TypeError, ValueError) as exc:
                errors.append(f"{where}.{f.name}: {exc}")
    _reject_unknown(raw, where, errors)
    try:
        obj = cls(**kwargs)
        if hasattr(obj, "validate"):
            obj.validate()
        return obj
    except InvalidSpecError as exc:
        errors.append(f"{where}: {exc}")
        return cls()


def parse_problem(text: str) -> FullSpec:
    """Parse and fully validate a spec document; raises SpecValidationError
    listing every problem found."""
    errors: list[str] = []
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecValidationError([f"not valid YAML: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise SpecValidationError(["document must be a mapping"])
    raw = dict(raw)

    prob_raw = raw.pop("problem", None)
    if not isinstance(prob_raw, dict):
        raise SpecValidationError(["missing required section 'problem'"])
    prob_raw = dict(prob_raw)

    dims = _take(prob_raw, "dims", None, errors, "problem")
    if dims is None:
        errors.append("problem.dims: required")
        dims = (2, 2)
    element_size = _take(prob_raw, "element_size", 1.0, errors, "problem")
    try:
        grid = mesh.build_grid(dims, element_size)
    except InvalidSpecError as exc:
        errors.append(f"problem.dims/element_size: {exc}")
        grid = mesh.build_grid((2, 2))
    ndim = grid.ndim

    mat_raw = dict(_take(prob_raw, "material", {}, errors, "problem") or {})
    material = _build_section(
        mat_raw, fem.Material, "problem.material", errors,
        {"youngs_modulus": float, "poisson_ratio": float, "e_min": float},
    )
    try:
        material.validate()
    except Exception as exc:
        errors.append(f"problem.material: {exc}")
        material = fem.Material()

    delta = _volume_fraction(
        _take(prob_raw, "volume_fraction", 0.5, errors, "problem"),
        "problem", errors,
    )
    fixed, loads, passive = _parse_regions(prob_raw, ndim, "problem", errors)
    _reject_unknown(prob_raw, "problem", errors)
    base_boundary = mesh.BoundarySpec(fixed, loads, passive)
    base = Problem(grid, material, base_boundary, delta)

    network = _build_section(
        dict(raw.pop("network", {}) or {}), NetworkConfig, "network", errors,
        {"width": int, "depth": int, "omega": float, "alpha": float,
         "seed": int, "latent_dim": int},
    )
    train = _build_section(
        dict(raw.pop("train", {}) or {}), TrainConfig, "train", errors,
        {"max_epochs": int, "optimizer": str, "learning_rate": float,
         "sigma0": float, "sigma_growth": float, "lambda0": float,
         "tau_start": float, "tau_end": float, "tau_ramp_epochs": int,
         "compliance_tol": float, "volume_tol": float,
         "stop_on_convergence": bool},
    )
    solver = _build_section(
        dict(raw.pop("solver", {}) or {}), SolverConfig, "solver", errors,
        {"tolerance": float, "max_iterations": int, "preconditioner": str,
         "smoother_damping": float, "smoothing_sweeps": int,
         "min_coarse_dofs": int},
    )
    simp_cfg = _build_section(
        dict(raw.pop("simp", {}) or {}), SimpConfig, "simp", errors,
        {"penal": float, "filter_radius": float, "move": float,
         "oc_tolerance": float, "max_iterations": int},
    )
    if train.optimizer not in ("rprop", "adam"):
        errors.append(f"train.optimizer: must be 'rprop' or 'adam', got {train.optimizer!r}")

    subtasks = []
    sub_raw = raw.pop("subtasks", []) or []
    if not isinstance(sub_raw, list):
        errors.append("subtasks: expected a list")
        sub_raw = []
    for i, item in enumerate(sub_raw):
        where = f"subtasks[{i}]"
        if not isinstance(item, dict):
            errors.append(f"{where}: expected a mapping")
            continue
        item = dict(item)
        sdelta = delta
        if "volume_fraction" in item:
            sdelta = _volume_fraction(item.pop("volume_fraction"), where, errors)
        sfixed, sloads, spassive = _parse_regions(item, ndim, where, errors)
        _reject_unknown(item, where, errors)
        boundary = mesh.BoundarySpec(
            sfixed or fixed, sloads or loads, spassive or passive
        )
        subtasks.append(Problem(grid, material, boundary, sdelta))
    if len(sub_raw) == 1:
        errors.append("subtasks: multi mode needs >= 2 subtasks")

    _reject_unknown(raw, "top level", errors)

    if not errors:
        for label, prob in [("problem", base)] + [
            (f"subtasks[{i}]", p) for i, p in enumerate(subtasks)
        ]:
            try:
                mesh.resolve_boundary(grid, prob.boundary)
            except InvalidSpecError as exc:
                errors.append(f"{label}: {exc}")
    if errors:
        raise SpecValidationError(errors)
    return FullSpec(base, tuple(subtasks), network, train, solver, simp_cfg)


def _region_dicts(boundary: mesh.BoundarySpec):
    out = {}
    if boundary.fixed:
        out["fixed"] = [
            {"box": [list(r.box.lo), list(r.box.hi)],
             "dofs": "".join(_AXES[a] for a in r.dofs)}
            for r in boundary.fixed
        ]
    if boundary.loads:
        out["loads"] = [
            {"box": [list(r.box.lo), list(r.box.hi)], "force": list(r.force)}
            for r in boundary.loads
        ]
    if boundary.passive:
        out["passive"] = [
            {"box": [list(r.box.lo), list(r.box.hi)], "state": r.state}
            for r in boundary.passive
        ]
    return out


def print_spec(spec: FullSpec) -> str:
    """Serialize a spec back to YAML; parse_problem(print_spec(s)) == s."""
    doc = {
        "problem": {
            "dims": list(spec.problem.grid.dims),
            "element_size": list(spec.problem.grid.element_size),
            "material": dataclasses.asdict(spec.problem.material),
            "volume_fraction": spec.problem.volume_fraction,
            **_region_dicts(spec.problem.boundary),
        },
        "network": dataclasses.asdict(spec.network),
        "train": dataclasses.asdict(spec.train),
        "solver": dataclasses.asdict(spec.solver),
        "simp": dataclasses.asdict(spec.simp),
    }
    if spec.subtasks:
        doc["subtasks"] = [
            {"volume_fraction": p.volume_fraction, **_region_dicts(p.boundary)}
            for p in spec.subtasks
        ]
    return yaml.safe_dump(doc, sort_keys=False)
