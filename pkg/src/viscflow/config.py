"""Experiment configuration: a flat ``key.path = value`` text format.

Grammar (one assignment per line):

    line    := blank | comment | pair
    comment := '#' anything
    pair    := dotted_key '=' tokens
    key     := word ('.' word)*
    tokens  := whitespace-separated scalars / words

Vectors are written as whitespace-separated numbers; a single number is
broadcast to the problem dimension where a vector is expected, which keeps
configs dimension-generic for sweeps.  Booleans are ``true`` / ``false``.
See the README for the full key reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .flows import Perturbation, PowerDecayPerturbation, SolverConfig, ZeroPerturbation
from .operators import (
    AffineContraction,
    Averaged,
    Composition,
    ConstantMap,
    Negation,
    Problem,
    ProjectionOp,
    Reflection,
    Rotation,
)
from .schedules import ConstantSchedule, PowerSchedule, TableSchedule, ThetaSchedule
from .sets import (
    AffineSubspace,
    Ball,
    Box,
    Halfspace,
    Intersection,
    WholeSpace,
)

_ANALYSES = ("vp", "rate", "boundedness", "stability", "gronwall", "conditions")


def parse_text(text):
    """Parse config text into a nested dict whose leaves are token lists."""
    root = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        path = [p.strip() for p in key.strip().split(".")]
        if not all(path):
            raise ConfigError(f"line {lineno}: malformed key {key.strip()!r}")
        tokens = value.split()
        node = root
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {lineno}: key {key.strip()!r} "
                                  "collides with an earlier scalar entry")
        if isinstance(node.get(path[-1]), dict):
            raise ConfigError(f"line {lineno}: key {key.strip()!r} "
                              "collides with an earlier section")
        node[path[-1]] = tokens
    return root


def echo_dict(node):
    """Token lists joined back into strings, for deterministic JSON echoes."""
    if isinstance(node, dict):
        return {k: echo_dict(v) for k, v in sorted(node.items())}
    return " ".join(node)


class _Section:
    """Cursor over one nested-dict section with typed accessors."""

    def __init__(self, node, path):
        self.node = node if node is not None else {}
        self.path = path

    def _full(self, key):
        return ".".join([*self.path, key]) if self.path else key

    def sub(self, key, required=True):
        child = self.node.get(key)
        if child is None:
            if required:
                raise ConfigError(f"missing section '{self._full(key)}'")
            return None
        if not isinstance(child, dict):
            raise ConfigError(f"'{self._full(key)}' must be a section")
        return _Section(child, [*self.path, key])

    def tokens(self, key, default=None, required=False):
        value = self.node.get(key)
        if value is None:
            if required:
                raise ConfigError(f"missing key '{self._full(key)}'")
            return default
        if isinstance(value, dict):
            raise ConfigError(f"'{self._full(key)}' is a section, expected a value")
        return value

    def str(self, key, default=None, required=False):
        toks = self.tokens(key, required=required)
        if toks is None:
            return default
        if len(toks) != 1:
            raise ConfigError(f"'{self._full(key)}' expects a single word")
        return toks[0]

    def float(self, key, default=None, required=False):
        toks = self.tokens(key, required=required)
        if toks is None:
            return default
        try:
            (value,) = toks
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"'{self._full(key)}' expects one number, got {toks}")

    def int(self, key, default=None, required=False):
        value = self.float(key, required=required)
        if value is None:
            return default
        if value != int(value):
            raise ConfigError(f"'{self._full(key)}' expects an integer")
        return int(value)

    def bool(self, key, default=None, required=False):
        word = self.str(key, required=required)
        if word is None:
            return default
        low = word.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"'{self._full(key)}' expects true/false, got {word!r}")

    def vector(self, key, dim=None, default=None, required=False):
        toks = self.tokens(key, required=required)
        if toks is None:
            return default
        try:
            values = np.array([float(t) for t in toks])
        except ValueError:
            raise ConfigError(f"'{self._full(key)}' expects numbers, got {toks}")
        if dim is not None and values.size == 1 and dim > 1:
            values = np.full(dim, values[0])
        if dim is not None and values.size != dim:
            raise ConfigError(
                f"'{self._full(key)}' has {values.size} entries, expected {dim}"
            )
        return values

    def floats(self, key, default=None, required=False):
        toks = self.tokens(key, required=required)
        if toks is None:
            return default
        try:
            return [float(t) for t in toks]
        except ValueError:
            raise ConfigError(f"'{self._full(key)}' expects numbers, got {toks}")


def build_set(section, dim):
    kind = section.str("kind", required=True)
    if kind == "ball":
        return Ball(center=section.vector("center", dim, required=True),
                    radius=section.float("radius", required=True))
    if kind == "halfspace":
        return Halfspace(normal=section.vector("normal", dim, required=True),
                         offset=section.float("offset", required=True))
    if kind in ("affine", "affine_subspace"):
        anchor = section.vector("anchor", dim, required=True)
        rows = []
        basis = section.sub("basis", required=False)
        if basis is not None:
            for i in range(len(basis.node)):
                rows.append(basis.vector(str(i), dim, required=True))
        basis_arr = np.stack(rows) if rows else np.zeros((0, dim))
        return AffineSubspace(anchor=anchor, basis=basis_arr)
    if kind == "box":
        return Box(lo=section.vector("lo", dim, required=True),
                   hi=section.vector("hi", dim, required=True))
    if kind in ("whole", "whole_space"):
        return WholeSpace(dim)
    if kind == "intersection":
        count = section.int("members", required=True)
        members = [build_set(section.sub(f"member{i}"), dim) for i in range(count)]
        return Intersection(tuple(members))
    raise ConfigError(f"unsupported set kind '{kind}'")


def build_operator(section, dim):
    kind = section.str("kind", required=True)
    if kind == "rotation":
        plane = section.vector("plane", default=np.array([0.0, 1.0]))
        return Rotation(angle=section.float("angle", required=True), _dim=dim,
                        plane=(int(plane[0]), int(plane[1])))
    if kind == "negation":
        return Negation(dim)
    if kind == "projection":
        return ProjectionOp(build_set(section.sub("set"), dim))
    if kind == "reflection":
        return Reflection(build_set(section.sub("set"), dim))
    if kind == "averaged":
        return Averaged(weight=section.float("weight", required=True),
                        inner_op=build_operator(section.sub("inner"), dim))
    if kind == "composition":
        count = section.int("parts", required=True)
        parts = [build_operator(section.sub(f"part{i}"), dim) for i in range(count)]
        return Composition(tuple(parts))
    raise ConfigError(f"unsupported operator kind '{kind}'")


def _build_linear(section, dim):
    if section is None:
        return np.eye(dim)
    kind = section.str("kind", required=True)
    if kind == "identity":
        return np.eye(dim)
    if kind == "rotation":
        plane = section.vector("plane", default=np.array([0.0, 1.0]))
        return Rotation(angle=section.float("angle", required=True), _dim=dim,
                        plane=(int(plane[0]), int(plane[1]))).matrix
    if kind == "scale":
        factor = section.float("factor", required=True)
        if abs(factor) > 1.0:
            raise ConfigError("scale factor must have magnitude at most 1")
        return factor * np.eye(dim)
    raise ConfigError(f"unsupported linear kind '{kind}'")


def build_contraction(section, dim):
    kind = section.str("kind", required=True)
    if kind == "constant":
        return ConstantMap(section.vector("value", dim, required=True))
    if kind == "affine":
        return AffineContraction(
            alpha=section.float("alpha", required=True),
            linear=_build_linear(section.sub("linear", required=False), dim),
            offset=section.vector("offset", dim, required=True),
        )
    raise ConfigError(f"unsupported contraction kind '{kind}'")


def build_problem(section, dim_override=None):
    dim = dim_override if dim_override is not None else section.int("dim", required=True)
    if dim < 1:
        raise ConfigError("problem.dim must be a positive integer")
    return Problem(
        set=build_set(section.sub("set"), dim),
        T=build_operator(section.sub("operator"), dim),
        f=build_contraction(section.sub("contraction"), dim),
    )


def build_schedule(section):
    kind = section.str("kind", required=True)
    if kind == "power":
        return PowerSchedule(K=section.float("K", required=True),
                             nu=section.float("nu", required=True),
                             clamp=section.bool("clamp", default=True))
    if kind == "constant":
        return ConstantSchedule(c=section.float("c", required=True))
    if kind == "table":
        return TableSchedule(
            knot_times=np.array(section.floats("times", required=True)),
            knot_values=np.array(section.floats("values", required=True)),
            clamp=section.bool("clamp", default=True),
        )
    raise ConfigError(f"unsupported schedule kind '{kind}'")


def build_solver(section):
    if section is None:
        raise ConfigError("missing section 'solver'")
    try:
        return SolverConfig(
            t_end=section.float("t_end", required=True),
            method=section.str("method", default="rk45"),
            h=section.float("h", default=None),
            abs_tol=section.float("abs_tol", default=1e-9),
            rel_tol=section.float("rel_tol", default=1e-9),
            project_each_step=section.bool("project_each_step", default=True),
            record_stride=section.float("record_stride", default=None),
            record_points=section.int("record_points", default=512),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def build_perturbation(section, dim):
    if section is None:
        return None
    kind = section.str("kind", required=True)
    if kind == "zero":
        return ZeroPerturbation(dim)
    if kind == "power_decay":
        try:
            return PowerDecayPerturbation(
                direction=section.vector("direction", dim, required=True),
                scale=section.float("scale", required=True),
                p=section.float("p", required=True),
                class_claim=section.str("class_claim", default=None),
            )
        except ValueError as exc:
            raise ConfigError(str(exc))
    raise ConfigError(f"unsupported perturbation kind '{kind}'")


def parse_analyses(tokens):
    out = []
    for token in tokens:
        name, _, arg = token.partition(":")
        if name not in _ANALYSES:
            raise ConfigError(f"unknown analysis '{token}'")
        params = {}
        if arg:
            if name != "rate":
                raise ConfigError(f"analysis '{name}' takes no argument")
            try:
                params["nu"] = float(arg)
            except ValueError:
                raise ConfigError(f"bad rate exponent in '{token}'")
        out.append((name, params))
    return out


@dataclass
class ExperimentConfig:
    problem: Problem
    schedule: ThetaSchedule
    solver: SolverConfig
    x0: np.ndarray
    analyses: list
    output_dir: str
    seed: int
    perturbation: Perturbation | None = None
    sweep_grid: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def load(text, overrides=None):
    """Build an ExperimentConfig from config text.

    ``overrides`` may remap ``seed``, ``t_end``, ``output_dir``, or ``dim``
    after parsing (command-line flags use this).
    """
    raw = parse_text(text)
    overrides = overrides or {}
    root = _Section(raw, [])

    problem_sec = root.sub("problem")
    dim = overrides.get("dim", problem_sec.int("dim", required=True))
    problem = build_problem(problem_sec, dim_override=dim)
    schedule = build_schedule(root.sub("schedule"))
    solver = build_solver(root.sub("solver"))
    if "t_end" in overrides:
        solver = SolverConfig(
            t_end=overrides["t_end"], method=solver.method, h=solver.h,
            abs_tol=solver.abs_tol, rel_tol=solver.rel_tol,
            project_each_step=solver.project_each_step,
            record_stride=solver.record_stride,
            record_points=solver.record_points,
        )

    run = root.sub("run")
    x0 = run.vector("x0", dim, required=True)
    analyses = parse_analyses(run.tokens("analyses", default=[]))
    seed = overrides.get("seed", run.int("seed", default=0))
    output_dir = overrides.get("output_dir", run.str("output_dir", default="out"))

    perturbation = build_perturbation(root.sub("perturbation", required=False), dim)
    if any(name == "stability" for name, _ in analyses) and perturbation is None:
        raise ConfigError("the stability analysis needs a perturbation section")

    sweep_grid = {}
    sweep = root.sub("sweep", required=False)
    if sweep is not None:
        for param in ("K", "nu", "alpha"):
            values = sweep.floats(param, default=None)
            if values:
                sweep_grid[param] = values
        dims = sweep.floats("dim", default=None)
        if dims:
            if any(v != int(v) or v < 1 for v in dims):
                raise ConfigError("sweep.dim expects positive integers")
            sweep_grid["dim"] = [int(v) for v in dims]

    return ExperimentConfig(
        problem=problem, schedule=schedule, solver=solver, x0=x0,
        analyses=analyses, output_dir=output_dir, seed=seed,
        perturbation=perturbation, sweep_grid=sweep_grid, raw=raw,
    )


def load_file(path, overrides=None):
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    return load(text, overrides=overrides)
