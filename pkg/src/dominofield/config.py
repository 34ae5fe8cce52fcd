"""Experiment configuration: JSON schema, validation, canonical hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import jsonschema

from .errors import ConfigError
from .region import Circle, DomainSpec, RectilinearPolygon, rectangle

_SHAPE_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"const": "rectangle"},
                "x0": {"type": "number"},
                "y0": {"type": "number"},
                "x1": {"type": "number"},
                "y1": {"type": "number"},
            },
            "required": ["type", "x0", "y0", "x1", "y1"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "circle"},
                "cx": {"type": "number"},
                "cy": {"type": "number"},
                "r": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["type", "cx", "cy", "r"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "polygon"},
                "vertices": {
                    "type": "array",
                    "minItems": 4,
                    "items": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                },
            },
            "required": ["type", "vertices"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "dominofield experiment configuration",
    "type": "object",
    "properties": {
        "domain": {
            "type": "object",
            "properties": {
                "outer": _SHAPE_SCHEMA,
                "holes": {"type": "array", "items": _SHAPE_SCHEMA},
                "marked_points": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                },
            },
            "required": ["outer", "marked_points"],
            "additionalProperties": False,
        },
        # lattice scales, continuum units per lattice step; one run per entry
        "eps": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "number", "exclusiveMinimum": 0},
        },
        "samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "query_points": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "array",
                "items": {"type": "number"},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "mesh_h": {"type": "number", "exclusiveMinimum": 0},
        "gates": {
            "type": "object",
            "properties": {
                "z_score": {"type": "number", "exclusiveMinimum": 0},
                "chi2_pvalue": {"type": "number", "exclusiveMinimum": 0},
                "tv_distance": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "out_dir": {"type": "string"},
    },
    "required": ["domain", "eps", "samples", "seed", "query_points", "mesh_h"],
    "additionalProperties": False,
}

_DEFAULT_GATES = {"z_score": 4.0, "chi2_pvalue": 1e-3, "tv_distance": 0.05}


def _shape_from_dict(d):
    if d["type"] == "rectangle":
        return rectangle(d["x0"], d["y0"], d["x1"], d["y1"])
    if d["type"] == "circle":
        return Circle(d["cx"], d["cy"], d["r"])
    return RectilinearPolygon(tuple((v[0], v[1]) for v in d["vertices"]))


@dataclass(frozen=True)
class ExperimentConfig:
    spec: DomainSpec
    eps_list: tuple
    samples: int
    seed: int
    query_points: tuple
    mesh_h: float
    gates: dict
    out_dir: str
    raw: dict = field(repr=False, default=None)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()


def parse_config(data: dict) -> ExperimentConfig:
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from exc
    dom = data["domain"]
    holes = tuple(_shape_from_dict(hh) for hh in dom.get("holes", []))
    marked = tuple((p[0], p[1]) for p in dom["marked_points"])
    if len(marked) != 1 + len(holes):
        raise ConfigError(
            f"domain.marked_points: need {1 + len(holes)} points "
            f"(one per boundary component), got {len(marked)}"
        )
    spec = DomainSpec(outer=_shape_from_dict(dom["outer"]), holes=holes,
                      marked_points=marked)
    gates = dict(_DEFAULT_GATES)
    gates.update(data.get("gates", {}))
    return ExperimentConfig(
        spec=spec,
        eps_list=tuple(float(e) for e in data["eps"]),
        samples=int(data["samples"]),
        seed=int(data["seed"]),
        query_points=tuple((p[0], p[1]) for p in data["query_points"]),
        mesh_h=float(data["mesh_h"]),
        gates=gates,
        out_dir=data.get("out_dir", "out"),
        raw=data,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return parse_config(data)
