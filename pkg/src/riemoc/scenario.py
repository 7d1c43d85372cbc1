"""Scenario files: JSON schema, validation, and construction of a :class:`Problem`.

Naming conventions inside expressions:

* manifold height: ``x1, x2``
* dynamics: ``t, x1..xn, u1..um``
* endpoint maps: ``a1..an`` (chart coordinates of x(0)), ``b1..bn`` (of x(T)), ``T``
* time-dependent control / direction expressions: ``t``
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .cones import ConeError, ConvexSet
from .conditions.endpoints import EndpointData, endpoint_names
from .dynamics import ControlSystem
from .exprlang import ExprError, compile_exprs, parse
from .geometry import GeometryError, Manifold
from .problem import Problem

__all__ = ["SCENARIO_SCHEMA", "Scenario", "ScenarioError", "load_scenario", "scenario_from_dict", "builtin_scenario", "BUILTINS"]


class ScenarioError(ValueError):
    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {message}")


_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_strs = {"type": "array", "items": {"type": "string"}}

_signal = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"kind": {"const": "constant"}, "value": {"oneOf": [_vec, _num]}},
            "required": ["kind", "value"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "piecewise"},
                "times": _vec,
                "values": {"type": "array", "items": {"oneOf": [_vec, _num]}, "minItems": 1},
            },
            "required": ["kind", "times", "values"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"kind": {"const": "expr"}, "value": {"type": "array", "items": {"type": "string"}, "minItems": 1}},
            "required": ["kind", "value"],
            "additionalProperties": False,
        },
    ]
}

SCENARIO_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "riemoc scenario",
    "type": "object",
    "required": ["manifold", "dynamics", "control_set", "horizon", "endpoints", "candidate"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "manifold": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {"kind": {"const": "flat"}, "dim": {"type": "integer", "minimum": 1}},
                    "required": ["kind", "dim"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {"kind": {"const": "graph"}, "height": {"type": "string"}},
                    "required": ["kind", "height"],
                    "additionalProperties": False,
                },
            ]
        },
        "dynamics": {
            "type": "object",
            "properties": {"m": {"type": "integer", "minimum": 1}, "f": {**_strs, "minItems": 1}},
            "required": ["m", "f"],
            "additionalProperties": False,
        },
        "control_set": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {"kind": {"const": "ball"}, "center": _vec, "radius": {"type": "number", "exclusiveMinimum": 0}},
                    "required": ["kind", "center", "radius"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {"kind": {"const": "box"}, "lower": _vec, "upper": _vec},
                    "required": ["kind", "lower", "upper"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {"kind": {"const": "polyhedron"}, "A": {"type": "array", "items": _vec, "minItems": 1}, "b": _vec},
                    "required": ["kind", "A", "b"],
                    "additionalProperties": False,
                },
            ]
        },
        "horizon": {
            "type": "object",
            "properties": {"kind": {"enum": ["fixed", "free"]}, "T": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["kind", "T"],
            "additionalProperties": False,
        },
        "endpoints": {
            "type": "object",
            "properties": {"phi0": {**_strs, "minItems": 1}, "phi": _strs, "psi": _strs},
            "required": ["phi0"],
            "additionalProperties": False,
        },
        "candidate": {
            "type": "object",
            "properties": {"x0": _vec, "control": _signal},
            "required": ["x0", "control"],
            "additionalProperties": False,
        },
        "singular_direction": {
            "type": "object",
            "properties": {"v": _signal, "xi": _signal, "sigma": _signal, "X0": _vec},
            "required": ["v"],
            "additionalProperties": False,
        },
        "numerics": {
            "type": "object",
            "properties": {
                "steps": {"type": "integer", "minimum": 2},
                "fd_step": {"type": "number", "exclusiveMinimum": 0},
                "samples": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "tolerances": {
                    "type": "object",
                    "properties": {
                        "first_order": {"type": "number", "exclusiveMinimum": 0},
                        "singular": {"type": "number", "exclusiveMinimum": 0},
                        "margin": {"type": "number", "minimum": 0},
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
    },
}


@dataclass
class Numerics:
    steps: int | None = None
    fd_step: float = 1e-5
    samples: int = 10_000
    seed: int = 0
    first_order_tol: float = 1e-7
    singular_tol: float = 1e-7
    margin_tol: float = 1e-6


@dataclass
class Scenario:
    name: str
    raw: dict
    problem: Problem
    v: Any = None
    xi: Any = None
    sigma: Any = None
    X0: np.ndarray | None = None
    numerics: Numerics = field(default_factory=Numerics)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else ""


def _signal_fn(spec: dict, dim: int, ptr: str):
    """Turn a signal spec into a constant vector or a callable of t."""
    kind = spec["kind"]
    if kind == "constant":
        val = np.atleast_1d(np.asarray(spec["value"], float))
        if val.shape != (dim,):
            raise ScenarioError(f"expected {dim} components, got {val.shape[0]}", ptr + "/value")
        return val
    if kind == "piecewise":
        t = np.asarray(spec["times"], float)
        vals = np.asarray(spec["values"], float).reshape(len(spec["values"]), -1)
        if vals.shape != (t.shape[0], dim):
            raise ScenarioError(f"expected {t.shape[0]} rows of {dim} components", ptr + "/values")
        if np.any(np.diff(t) <= 0):
            raise ScenarioError("times must be strictly increasing", ptr + "/times")
        return lambda s: np.array([np.interp(s, t, vals[:, i]) for i in range(dim)])
    exprs = []
    if len(spec["value"]) != dim:
        raise ScenarioError(f"expected {dim} expressions", ptr + "/value")
    for i, s in enumerate(spec["value"]):
        exprs.append(_parse(s, ["t"], f"{ptr}/value/{i}"))
    fn = compile_exprs(exprs, ["t"], backend="math")
    return lambda s: np.array(fn(float(s)))


def _parse(text: str, names, ptr: str):
    try:
        return parse(text, names)
    except ExprError as exc:
        raise ScenarioError(str(exc), ptr) from exc


def scenario_from_dict(data: dict, T: float | None = None, steps: int | None = None, name: str = "scenario") -> Scenario:
    data = copy.deepcopy(data)
    if T is not None:
        data.setdefault("horizon", {})["T"] = float(T)
    if steps is not None:
        data.setdefault("numerics", {})["steps"] = int(steps)
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ScenarioError(e.message, _pointer(e.absolute_path))

    num_raw = data.get("numerics", {})
    tol = num_raw.get("tolerances", {})
    numerics = Numerics(
        steps=num_raw.get("steps"),
        fd_step=num_raw.get("fd_step", 1e-5),
        samples=num_raw.get("samples", 10_000),
        seed=num_raw.get("seed", 0),
        first_order_tol=tol.get("first_order", 1e-7),
        singular_tol=tol.get("singular", 1e-7),
        margin_tol=tol.get("margin", 1e-6),
    )
    if numerics.steps is not None and numerics.steps % 2:
        raise ScenarioError("steps must be even", "/numerics/steps")

    man = data["manifold"]
    try:
        if man["kind"] == "flat":
            M = Manifold.flat(man["dim"])
        else:
            M = Manifold.graph(_parse(man["height"], ["x1", "x2"], "/manifold/height"), fd_step=numerics.fd_step)
    except GeometryError as exc:
        raise ScenarioError(str(exc), "/manifold") from exc
    n = M.dim

    dyn = data["dynamics"]
    m = dyn["m"]
    if len(dyn["f"]) != n:
        raise ScenarioError(f"expected {n} dynamics components", "/dynamics/f")
    names = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
    f = [_parse(s, names, f"/dynamics/f/{i}") for i, s in enumerate(dyn["f"])]
    system = ControlSystem(f, n, m)

    cs = data["control_set"]
    try:
        if cs["kind"] == "ball":
            U = ConvexSet.ball(cs["center"], cs["radius"])
        elif cs["kind"] == "box":
            U = ConvexSet.box(cs["lower"], cs["upper"])
        else:
            U = ConvexSet.polyhedron(cs["A"], cs["b"])
    except ConeError as exc:
        raise ScenarioError(str(exc), "/control_set") from exc
    if U.dim != m:
        raise ScenarioError(f"control set has dimension {U.dim}, dynamics expect {m}", "/control_set")

    ep_raw = data["endpoints"]
    enames = endpoint_names(n)
    groups = {}
    for key in ("phi0", "phi", "psi"):
        groups[key] = [_parse(s, enames, f"/endpoints/{key}/{i}") for i, s in enumerate(ep_raw.get(key, []))]
    endpoints = EndpointData(n, groups["phi0"], groups["phi"], groups["psi"])

    cand = data["candidate"]
    x0 = np.asarray(cand["x0"], float)
    if x0.shape != (n,):
        raise ScenarioError(f"expected {n} initial coordinates", "/candidate/x0")
    control = _signal_fn(cand["control"], m, "/candidate/control")
    hz = data["horizon"]
    problem = Problem(M, system, U, endpoints, x0, control, float(hz["T"]), horizon=hz["kind"], steps=numerics.steps)

    sd = data.get("singular_direction", {})
    v = _signal_fn(sd["v"], m, "/singular_direction/v") if "v" in sd else None
    xi = _signal_fn(sd["xi"], 1, "/singular_direction/xi") if "xi" in sd else None
    sigma = _signal_fn(sd["sigma"], m, "/singular_direction/sigma") if "sigma" in sd else None
    X0 = None
    if "X0" in sd:
        X0 = np.asarray(sd["X0"], float)
        if X0.shape != (n,):
            raise ScenarioError(f"expected {n} components", "/singular_direction/X0")
    return Scenario(data.get("name", name), data, problem, v, xi, sigma, X0, numerics)


def load_scenario(path: str | Path, T: float | None = None, steps: int | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    return scenario_from_dict(data, T=T, steps=steps, name=path.stem)


EXAMPLE_EXG: dict[str, Any] = {
    "name": "example-exg",
    "description": "Two-objective problem on the graph of ln(1+x1^2+x2^2) with the unit-ball control set; "
    "candidate u = (1, 0) from the origin, singular direction v = (0, 1).",
    "manifold": {"kind": "graph", "height": "ln(1+x1^2+x2^2)"},
    "dynamics": {"m": 2, "f": ["u2*ln(1+x1^2+x2^2)^2", "-x1^2+4*x1*u2-u1"]},
    "control_set": {"kind": "ball", "center": [0, 0], "radius": 1},
    "horizon": {"kind": "fixed", "T": 1.0},
    "endpoints": {"phi0": ["-b1^2", "-ln(1+b1^2+b2^2)"], "phi": ["a2"], "psi": ["a1", "b1^3+b2+T"]},
    "candidate": {"x0": [0, 0], "control": {"kind": "constant", "value": [1, 0]}},
    "singular_direction": {
        "v": {"kind": "constant", "value": [0, 1]},
        "sigma": {"kind": "constant", "value": [-0.5, 0]},
        "X0": [0, 0],
    },
}

BUILTINS = {"example-exg": EXAMPLE_EXG}


def builtin_scenario(name: str, T: float | None = None, steps: int | None = None) -> Scenario:
    if name not in BUILTINS:
        raise ScenarioError(f"unknown builtin {name!r}; available: {sorted(BUILTINS)}")
    return scenario_from_dict(BUILTINS[name], T=T, steps=steps, name=name)
