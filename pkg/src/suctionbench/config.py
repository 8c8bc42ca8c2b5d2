"""Toolkit configuration.

One JSON file holds every tunable constant. Lengths carry their unit in
the key name (``_mm``, ``_px``); they are converted to meters here and
nowhere else.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass

from .baselines import SamplerConfig
from .evaluation import EvalConfig
from .scene import CollisionParams
from .seal import CupModel, SealParams
from .wrench import WrenchParams

DEFAULTS = {
    "cup": {"radius_mm": 10.0, "n_vertices": 8},
    "seal": {
        "c_per_mm2": 0.5,
        "neighborhood_factor": 1.25,
        "standoff_factor": 2.0,
        "max_travel_factor": 4.0,
        "binary": False,
        "binary_threshold": 0.1,
        "surface_spacing_mm": 1.5,
    },
    "sampling": {"voxel_mm": 5.0},
    "wrench": {"k_newton": 31.8, "mass_kg": 1.0, "g": 9.8},
    "collision": {
        "radius_mm": 12.0,
        "height_mm": 50.0,
        "offset_mm": 2.0,
        "exclusion_mm": 5.0,
        "cloud_spacing_mm": 2.0,
        "include_table": True,
    },
    "evaluation": {
        "thresholds": [0.2, 0.4, 0.6, 0.8],
        "top_k": 50,
        "per_object_cap": 10,
        "nms_radius_mm": 20.0,
        "association_distance_mm": 50.0,
        "reject_collisions": False,
    },
    "baseline": {"patch_radius_px": 5, "normal_neighbors": 30, "grid_cell_px": 16, "top_n": 1024},
    "labels": {"sigma_px": 4.0, "center_sigma_px": 8.0, "occlusion_test": True},
    "mesh_registry": {},
    "output_dir": "out",
}


class ConfigError(ValueError):
    pass


def _merge(base, override, path=""):
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict) and key != "mesh_registry":
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be an object")
            _merge(base[key], value, where + ".")
        else:
            base[key] = value


@dataclass(frozen=True)
class ToolkitConfig:
    raw: dict
    cup: CupModel
    seal: SealParams
    voxel: float
    surface_spacing: float
    wrench: WrenchParams
    collision: CollisionParams
    evaluation: EvalConfig
    sampler: SamplerConfig
    patch_radius: int
    normal_neighbors: int
    sigma_px: float
    center_sigma_px: float
    occlusion_test: bool
    mesh_registry: dict
    output_dir: str

    @classmethod
    def from_dict(cls, data: dict | None = None) -> "ToolkitConfig":
        raw = copy.deepcopy(DEFAULTS)
        _merge(raw, data or {})
        mm = 1e-3
        try:
            cup = CupModel(raw["cup"]["radius_mm"] * mm, int(raw["cup"]["n_vertices"]))
            s = raw["seal"]
            seal = SealParams(s["c_per_mm2"] / mm ** 2, s["neighborhood_factor"], s["standoff_factor"],
                              s["max_travel_factor"], bool(s["binary"]), s["binary_threshold"])
            if not s["surface_spacing_mm"] > 0 or not raw["sampling"]["voxel_mm"] > 0:
                raise ValueError("surface spacing and voxel size must be positive")
            w = raw["wrench"]
            wrench = WrenchParams(cup.radius, w["k_newton"], w["mass_kg"], w["g"])
            c = raw["collision"]
            collision = CollisionParams(c["radius_mm"] * mm, c["height_mm"] * mm, c["offset_mm"] * mm,
                                        c["exclusion_mm"] * mm, c["cloud_spacing_mm"] * mm, bool(c["include_table"]))
            e = raw["evaluation"]
            evaluation = EvalConfig(tuple(e["thresholds"]), int(e["top_k"]), int(e["per_object_cap"]),
                                    e["nms_radius_mm"] * mm, e["association_distance_mm"] * mm,
                                    bool(e["reject_collisions"]))
            b = raw["baseline"]
            sampler = SamplerConfig(int(b["grid_cell_px"]), int(b["top_n"]))
            if int(b["patch_radius_px"]) < 1 or int(b["normal_neighbors"]) < 3:
                raise ValueError("patch radius must be >= 1 and normal_neighbors >= 3")
            lab = raw["labels"]
            if lab["sigma_px"] < 0 or lab["center_sigma_px"] < 0:
                raise ValueError("label sigmas must be non-negative")
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(raw, cup, seal, raw["sampling"]["voxel_mm"] * mm, s["surface_spacing_mm"] * mm, wrench,
                   collision, evaluation, sampler, int(b["patch_radius_px"]), int(b["normal_neighbors"]),
                   float(lab["sigma_px"]), float(lab["center_sigma_px"]), bool(lab["occlusion_test"]),
                   dict(raw["mesh_registry"]), str(raw["output_dir"]))


def load_config(path=None) -> ToolkitConfig:
    if path is None:
        return ToolkitConfig.from_dict({})
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"configuration file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: configuration must be a JSON object")
    return ToolkitConfig.from_dict(data)


def default_config_text():
    return json.dumps(DEFAULTS, indent=2) + "\n"
