"""Flat ``key = value`` experiment configuration files.

Blank lines and ``#`` comments are ignored. Vectors are comma separated.
Angles in ``goal``, paths and tolerances are in degrees. Pushes are listed as
``num_pushes = N`` followed by ``push<i>_side`` and ``push<i>_path`` for
``i = 1..N``; a path reads ``line 0.15; arc 0.75 -90; turn 45``.
"""
from __future__ import annotations

from dataclasses import replace
from typing import Callable, Mapping, Optional

import numpy as np

from .harness import LINE_TRACK, MANIPULATE, ExperimentConfig
from .mpc import MpcWeights
from .pushing import FrictionParams
from .plant import PlantParams
from .reference import ManeuverParams


class ConfigError(ValueError):
    pass


def _floats(n: Optional[int] = None) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        vals = tuple(float(x) for x in text.replace(",", " ").split())
        if n is not None and len(vals) != n:
            raise ValueError(f"expected {n} values, got {len(vals)}")
        return vals
    return parse


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_path(text: str) -> tuple:
    """``line L; arc R sweep_deg; turn sweep_deg`` to path-spec tuples."""
    items = []
    for part in text.split(";"):
        tok = part.split()
        if not tok:
            continue
        kind, vals = tok[0].lower(), [float(x) for x in tok[1:]]
        if kind == "line" and len(vals) == 1:
            items.append(("line", vals[0]))
        elif kind == "arc" and len(vals) == 2:
            items.append(("arc", vals[0], np.deg2rad(vals[1])))
        elif kind == "turn" and len(vals) == 1:
            items.append(("turn", np.deg2rad(vals[0])))
        else:
            raise ValueError(f"bad path segment {part.strip()!r}")
    if not items:
        raise ValueError("empty path")
    return tuple(items)


# key -> (group, field, parser); group None means ExperimentConfig itself
_KEYS: dict[str, tuple[Optional[str], str, Callable]] = {
    "scenario": (None, "scenario", lambda s: s.strip().replace("-", "_")),
    "phi": (None, "phi", float),
    "ts": (None, "ts", float),
    "horizon": (None, "horizon", int),
    "u_max": (None, "u_max", _floats(2)),
    "force_max": (None, "force_max", float),
    "sigma": (None, "sigma", float),
    "half_side": (None, "half_side", float),
    "constraint": (None, "constraint_enabled", _bool),
    "seed": (None, "seed", int),
    "noise_std": (None, "noise_std", float),
    "out_dir": (None, "out_dir", str.strip),
    "log_timing": (None, "log_timing", _bool),
    "line_length": (None, "line_length", float),
    "v_ref": (None, "v_ref", float),
    "a_ref": (None, "a_ref", float),
    "max_time": (None, "max_time", float),
    "line_tolerance": (None, "line_tolerance", float),
    "goal": (None, "goal", lambda s: (lambda v: (v[0], v[1], float(np.deg2rad(v[2]))))(_floats(3)(s))),
    "arc_radius": (None, "arc_radius", float),
    "push_v_ref": (None, "push_v_ref", float),
    "push_a_ref": (None, "push_a_ref", float),
    "goal_position_tolerance": (None, "goal_position_tolerance", float),
    "goal_orientation_tolerance": (None, "goal_orientation_tolerance_deg", float),
    "q_diag": ("weights", "q_diag", _floats(5)),
    "p_diag": ("weights", "p_terminal", lambda s: np.diag(_floats(5)(s))),
    "r_u_diag": ("weights", "r_u_diag", _floats(6)),
    "r_du_diag": ("weights", "r_du_diag", _floats(6)),
    "mu_contact": ("friction", "mu_contact", float),
    "mu_support": ("friction", "mu_support", float),
    "object_mass": ("friction", "object_mass", float),
    "gravity": ("friction", "gravity", float),
    "bumper_offset": ("plant", "bumper_offset", float),
    "bumper_half_width": ("plant", "bumper_half_width", float),
    "plant_substeps": ("plant", "substeps", int),
    "retreat": ("maneuver", "retreat", float),
    "clearance": ("maneuver", "clearance", float),
    "approach_speed": ("maneuver", "approach_speed", float),
    "overshoot": ("maneuver", "overshoot", float),
}
_GROUP_TYPES = {"weights": MpcWeights, "friction": FrictionParams, "plant": PlantParams, "maneuver": ManeuverParams}


def parse_text(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        if key in entries:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        entries[key] = value
    return entries


def build_config(entries: Mapping[str, str], base: ExperimentConfig = ExperimentConfig()) -> ExperimentConfig:
    """Apply raw ``key -> text`` entries on top of ``base``."""
    entries = dict(entries)
    top: dict = {}
    groups: dict[str, dict] = {g: {} for g in _GROUP_TYPES}
    pushes = _pop_pushes(entries)
    for key, text in entries.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}")
        group, name, parse = _KEYS[key]
        try:
            value = parse(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        (top if group is None else groups[group])[name] = value
    if pushes is not None:
        top["push_sides"], top["push_paths"] = pushes
    try:
        for g, vals in groups.items():
            if vals:
                top[g] = replace(getattr(base, g), **vals)
        cfg = replace(base, **top)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.scenario not in (LINE_TRACK, MANIPULATE):
        raise ConfigError(f"unknown scenario {cfg.scenario!r}")
    return cfg


def _pop_pushes(entries: dict) -> Optional[tuple]:
    push_keys = [k for k in entries if k.startswith("push") and (k.endswith("_side") or k.endswith("_path"))]
    if "num_pushes" not in entries:
        if push_keys:
            raise ConfigError("push entries need num_pushes")
        return None
    try:
        n = int(entries.pop("num_pushes"))
    except ValueError:
        raise ConfigError("num_pushes must be an integer") from None
    sides, paths = [], []
    for i in range(1, n + 1):
        try:
            side = int(entries.pop(f"push{i}_side"))
            path = parse_path(entries.pop(f"push{i}_path"))
        except KeyError as exc:
            raise ConfigError(f"missing {exc.args[0]}") from None
        except ValueError as exc:
            raise ConfigError(f"push {i}: {exc}") from None
        if side not in (0, 1, 2, 3):
            raise ConfigError(f"push{i}_side must be 0..3")
        sides.append(side)
        paths.append(path)
    leftover = [k for k in entries if k in push_keys]
    if leftover:
        raise ConfigError(f"push entries beyond num_pushes: {', '.join(sorted(leftover))}")
    return tuple(sides), tuple(paths)


def load_config(path: str, base: ExperimentConfig = ExperimentConfig()) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return build_config(parse_text(text), base)
