"""Scenario files (TOML) and run exports (CSV trajectory, JSON summary).

A scenario file has optional ``[model]``, ``[solver]``, ``[planner]`` and
``[sim]`` tables whose keys are the fields of the matching config classes,
a ``[[waypoints]]`` array shared by all vehicles and one ``[[quads]]``
entry per vehicle. A quad may carry its own ``[[quads.waypoints]]`` route.
Omitted keys take the library defaults; unknown keys are rejected.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import tomli_w

from .core_model import ModelParams, QuadState, SinusoidMotion, Waypoint
from .pmpc_solver import SolverConfig
from .sim_harness import Metrics, QuadSpec, SimLog, TrackScenario
from .velocity_search import PlannerConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

SCENARIO_FORMAT = 1
TRAJECTORY_FORMAT = "pmpc-trajectory/1"
TRAJECTORY_COLUMNS = (
    "t", "quad",
    "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz",
    "thrust", "wx", "wy", "wz",
    "waypoint", "min_e_distance", "iterations",
)

_SIM_DEFAULTS = {"duration": 30.0, "control_period": 0.02}
_WAYPOINT_KEYS = {"position", "tolerance", "stop", "motion"}
_MOTION_KEYS = {"amplitude", "period", "phase"}
_QUAD_KEYS = {"position", "velocity", "attitude", "waypoints"}
_TOP_KEYS = {"name", "format", "model", "solver", "planner", "sim", "waypoints", "quads"}


class ScenarioError(ValueError):
    """Invalid scenario; ``location`` names the offending table or key."""

    kind = "validation"

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class ScenarioParseError(ScenarioError):
    kind = "parse"


# --------------------------------------------------------------------------- #
# reading
# --------------------------------------------------------------------------- #

def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ScenarioError("expected a table", where)
    for key in table:
        if key not in allowed:
            raise ScenarioError(f"unknown key '{key}'", where)


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"expected a number, got {value!r}", where)
    return float(value)


def _integer(value, where):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"expected an integer, got {value!r}", where)
    return value


def _vector(value, where, n=3):
    if not isinstance(value, list) or (n is not None and len(value) != n):
        size = f"{n} " if n is not None else ""
        raise ScenarioError(f"expected a list of {size}numbers", where)
    return tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(value))


def _config(cls, table, where):
    """Build a frozen config dataclass from a table keyed by its field names."""
    table = {} if table is None else table
    fields = {f.name: f for f in dataclasses.fields(cls)}
    _check_keys(table, fields, where)
    kwargs = {}
    for name, value in table.items():
        default = fields[name].default
        key = f"{where}.{name}"
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ScenarioError(f"expected true/false, got {value!r}", key)
            kwargs[name] = value
        elif isinstance(default, int) or default is None:
            kwargs[name] = _integer(value, key)
        elif isinstance(default, float):
            kwargs[name] = _number(value, key)
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ScenarioError(f"expected a string, got {value!r}", key)
            kwargs[name] = value
        elif isinstance(default, tuple):
            kwargs[name] = _vector(value, key, None)
        else:  # pragma: no cover - all config fields are covered above
            raise ScenarioError("unsupported field", key)
    missing = sorted(set(fields) - set(table))
    if missing:
        log.info("%s: defaults applied for %s", where, ", ".join(missing))
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ScenarioError(str(exc), where) from None


def _waypoint(table, where):
    _check_keys(table, _WAYPOINT_KEYS, where)
    if "position" not in table:
        raise ScenarioError("missing required key 'position'", where)
    motion = None
    if "motion" in table:
        m = table["motion"]
        _check_keys(m, _MOTION_KEYS, f"{where}.motion")
        kw = {k: _vector(m[k], f"{where}.motion.{k}") for k in _MOTION_KEYS if k in m}
        try:
            motion = SinusoidMotion(**kw)
        except ValueError as exc:
            raise ScenarioError(str(exc), f"{where}.motion") from None
    stop = table.get("stop", False)
    if not isinstance(stop, bool):
        raise ScenarioError(f"expected true/false, got {stop!r}", f"{where}.stop")
    try:
        return Waypoint(
            _vector(table["position"], f"{where}.position"),
            motion,
            _number(table.get("tolerance", 0.3), f"{where}.tolerance"),
            stop,
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc), where) from None


def _waypoints(items, where):
    if not isinstance(items, list):
        raise ScenarioError("expected an array of tables", where)
    return tuple(_waypoint(w, f"{where}[{i}]") for i, w in enumerate(items))


def _quad(table, where):
    _check_keys(table, _QUAD_KEYS, where)
    if "position" not in table:
        raise ScenarioError("missing required key 'position'", where)
    pos = _vector(table["position"], f"{where}.position")
    vel = _vector(table.get("velocity", [0.0, 0.0, 0.0]), f"{where}.velocity")
    att = _vector(table.get("attitude", [1.0, 0.0, 0.0, 0.0]), f"{where}.attitude", 4)
    try:
        state = QuadState(pos, vel, att)
    except ValueError as exc:
        raise ScenarioError(str(exc), where) from None
    route = _waypoints(table["waypoints"], f"{where}.waypoints") if "waypoints" in table else None
    return QuadSpec(state, route)


def parse_scenario(doc: dict, source: str = "<scenario>") -> TrackScenario:
    """Validate a decoded scenario document."""
    _check_keys(doc, _TOP_KEYS, source)
    fmt = doc.get("format", SCENARIO_FORMAT)
    if fmt != SCENARIO_FORMAT:
        raise ScenarioError(f"unsupported format {fmt!r} (expected {SCENARIO_FORMAT})", f"{source}: format")
    if "quads" not in doc:
        raise ScenarioError("missing required array 'quads'", source)
    if not isinstance(doc["quads"], list):
        raise ScenarioError("expected an array of tables", f"{source}: quads")
    name = doc.get("name", Path(source).stem)
    if not isinstance(name, str):
        raise ScenarioError("expected a string", f"{source}: name")
    params = _config(ModelParams, doc.get("model"), "model")
    solver = _config(SolverConfig, doc.get("solver"), "solver")
    planner = _config(PlannerConfig, doc.get("planner"), "planner")
    sim = doc.get("sim", {})
    _check_keys(sim, _SIM_DEFAULTS, "sim")
    sim_vals = {k: _number(sim.get(k, d), f"sim.{k}") for k, d in _SIM_DEFAULTS.items()}
    waypoints = _waypoints(doc.get("waypoints", []), "waypoints")
    quads = tuple(_quad(q, f"quads[{i}]") for i, q in enumerate(doc["quads"]))
    try:
        return TrackScenario(
            quads=quads,
            waypoints=waypoints,
            params=params,
            solver=solver,
            planner=planner,
            duration=sim_vals["duration"],
            control_period=sim_vals["control_period"],
            name=name,
        )
    except ValueError as exc:
        raise ScenarioError(str(exc), source) from None


def loads_scenario(text: str, source: str = "<scenario>") -> TrackScenario:
    if not text.strip():
        raise ScenarioParseError("empty scenario file", source)
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioParseError(str(exc), source) from None
    return parse_scenario(doc, source)


def load_scenario(path) -> TrackScenario:
    """Read and validate a scenario file. ``OSError`` propagates for I/O failures."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return loads_scenario(text, str(path))


def bundled_scenarios() -> list[str]:
    root = resources.files("pmpc") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_scenario(name_or_path) -> Path:
    """A filesystem path if it exists, else the bundled scenario of that name."""
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = resources.files("pmpc") / "scenarios" / f"{p.stem if p.suffix == '.toml' else p.name}.toml"
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"no scenario file or bundled scenario named '{name_or_path}'")


# --------------------------------------------------------------------------- #
# writing
# --------------------------------------------------------------------------- #

def _plain(value):
    if isinstance(value, (tuple, list, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def _waypoint_dict(w: Waypoint) -> dict:
    d = {"position": _plain(w.base_position), "tolerance": float(w.pass_tolerance), "stop": bool(w.stop)}
    if w.motion is not None:
        d["motion"] = {k: _plain(getattr(w.motion, k)) for k in ("amplitude", "period", "phase")}
    return d


def scenario_to_dict(sc: TrackScenario) -> dict:
    """Complete, explicit document for ``sc`` (every default written out)."""
    def cfg(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if getattr(obj, f.name) is not None}

    quads = []
    for q in sc.quads:
        d = {
            "position": _plain(q.initial.position),
            "velocity": _plain(q.initial.velocity),
            "attitude": _plain(q.initial.attitude),
        }
        if q.waypoints is not None:
            d["waypoints"] = [_waypoint_dict(w) for w in q.waypoints]
        quads.append(d)
    return {
        "format": SCENARIO_FORMAT,
        "name": sc.name,
        "model": cfg(sc.params),
        "solver": cfg(sc.solver),
        "planner": cfg(sc.planner),
        "sim": {"duration": float(sc.duration), "control_period": float(sc.control_period)},
        "waypoints": [_waypoint_dict(w) for w in sc.waypoints],
        "quads": quads,
    }


def dumps_scenario(sc: TrackScenario) -> str:
    return tomli_w.dumps(scenario_to_dict(sc))


def write_scenario(sc: TrackScenario, path) -> None:
    Path(path).write_text(dumps_scenario(sc), encoding="utf-8")


# --------------------------------------------------------------------------- #
# run exports
# --------------------------------------------------------------------------- #

def format_number(x) -> str:
    # 17 significant digits round-trip doubles exactly
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def trajectory_csv(log_: SimLog) -> str:
    """Rows ``t, quad, state(10), input(4), waypoint, min_e_distance, iterations``.

    One row per control step and vehicle; the final state (no input) is
    not exported. The first line names the format version.
    """
    buf = io.StringIO()
    buf.write(f"# {TRAJECTORY_FORMAT}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    dist = log_.distances()
    for k in range(log_.n_steps):
        for j in range(log_.n_quads):
            row = [format_number(log_.times[k]), str(j)]
            row += [format_number(v) for v in log_.states[k, j]]
            row += [format_number(v) for v in log_.inputs[k, j]]
            row += [str(int(log_.waypoint_index[k, j])), format_number(dist[k]), str(int(log_.iterations[k]))]
            w.writerow(row)
    return buf.getvalue()


def read_trajectory_csv(text: str) -> dict:
    """Parse an exported trajectory into column arrays (inverse of :func:`trajectory_csv`)."""
    lines = text.splitlines()
    if not lines or lines[0] != f"# {TRAJECTORY_FORMAT}":
        raise ValueError("not a trajectory export of a supported version")
    rows = list(csv.reader(lines[1:]))
    if tuple(rows[0]) != TRAJECTORY_COLUMNS:
        raise ValueError("unexpected trajectory header")
    data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(TRAJECTORY_COLUMNS))
    return {c: data[:, i] for i, c in enumerate(TRAJECTORY_COLUMNS)}


def summary_dict(sc: TrackScenario, log_: SimLog, metrics: Metrics) -> dict:
    return {
        "format": TRAJECTORY_FORMAT,
        "scenario": sc.name,
        "n_quads": log_.n_quads,
        "n_steps": log_.n_steps,
        "pass_times": [[float(t) for t in p] for p in log_.pass_times],
        **metrics.to_dict(),
    }


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"
