"""Declarative run configuration: defaults, YAML loading, strict validation,
and builders for the runtime objects."""

from __future__ import annotations

import copy
import hashlib
import json
import math

import yaml

from . import exper, loop, netcore, simenv
from .errors import ConfigError

E = math.e

DEFAULTS = {
    "network": {
        "hidden": [13, 12, 11, 10, 9, 8, 7, 6, 5, 4],
        "outputs": 3,
        "activation": "tanh",
        # per-weight-layer init width: small against raw GSV-scale predictors,
        # near-unity through the hidden stack, small again at the output so
        # the untrained predictive action stays close to zero
        "w0": [0.004] + [0.55] * 9 + [0.05],
        "output_weighting": [1.0, 3.0, 5.0],
    },
    "rule": {
        "kind": "sar",  # gdm | localprop | sar | none
        "eta": E**-5,
    },
    "loop": {
        "k": [1.0, 2.0, 3.0],
        "reflex_gain": 0.04,
        "loop_gain": "auto",  # signed number, or "auto" to probe the sign
        "loop_gain_magnitude": 5.0e-6,
        "mc_limit": 5.0,
    },
    "sensors": {
        # innermost pair clears the 2 cm line by 2 cm, leaving a dead band
        # the learned action can settle into; the wide field of view makes
        # the error ramp in gently at the band's edge
        "ldr_lateral": [4.5, 5.5, 6.5],
        "ldr_forward": 3.0,
        "ldr_fov_radius": 1.0,
        "camera": {
            "width": 15.0,
            "depth": 10.0,
            "ahead": 5.0,
            "supersample": 3,
        },
    },
    "filters": {
        "taps": None,  # null -> built-in delayed averaging bank
    },
    "track": {
        "kind": "rounded_rect",
        "width": 2.0,
        "scale": 0.25,
        "margin": 25.0,
        "path_value": 0.0,
        "bg_value": 255.0,
        "params": {
            "rect_width": 110.0,
            "rect_height": 80.0,
            "radii": [12.0, 12.0, 18.0, 18.0],
        },
    },
    "sim": {
        "dt": 0.05,
        "v0": 5.0,
        "wheel_base": 10.0,
        "integrator": "arc",
    },
    "trial": {
        "max_duration": 2400.0,
        "threshold": 0.1,
        "window": 25.0,
        "warmup": 12.0,
        "grace": 75.0,
        "seed": 1,
        "distance_interval": 1.0,
        "lost_line_timeout": 5.0,
    },
    "batch": {
        "seeds": 10,
        "rules": ["gdm", "localprop", "sar"],
        "etas": [E**-5],
        "jobs": 1,
    },
    "output": {
        "dir": "runs",
        "trace": True,
        "predictor_trace": False,
    },
}


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _num_list(v) -> bool:
    return isinstance(v, list) and all(_is_num(x) for x in v)


# leaf validators: path -> (predicate, description)
_CHECKS = {
    "network.hidden": (
        lambda v: isinstance(v, list) and v and all(isinstance(x, int) and x >= 1 for x in v),
        "list of positive integers",
    ),
    "network.outputs": (lambda v: isinstance(v, int) and v >= 1, "positive integer"),
    "network.activation": (
        lambda v: v in ("tanh", "linear"),
        "one of tanh, linear",
    ),
    "network.w0": (
        lambda v: (_is_num(v) and v > 0) or (_num_list(v) and all(x > 0 for x in v)),
        "positive number or list of positive numbers",
    ),
    "network.output_weighting": (_num_list, "list of numbers"),
    "rule.kind": (
        lambda v: v in (*netcore.RULES, "none"),
        "one of gdm, localprop, sar, none",
    ),
    "rule.eta": (lambda v: _is_num(v) and v > 0, "positive number"),
    "loop.k": (
        lambda v: _num_list(v) and len(v) == 3,
        "list of 3 numbers",
    ),
    "loop.reflex_gain": (_is_num, "number"),
    "loop.loop_gain": (
        lambda v: v == "auto" or (_is_num(v) and v != 0),
        "'auto' or a signed nonzero number",
    ),
    "loop.loop_gain_magnitude": (lambda v: _is_num(v) and v > 0, "positive number"),
    "loop.mc_limit": (
        lambda v: v is None or (_is_num(v) and v > 0),
        "positive number or null",
    ),
    "sensors.ldr_lateral": (
        lambda v: _num_list(v) and len(v) == 3 and 0 < v[0] < v[1] < v[2],
        "3 ascending positive offsets",
    ),
    "sensors.ldr_forward": (_is_num, "number"),
    "sensors.ldr_fov_radius": (lambda v: _is_num(v) and v > 0, "positive number"),
    "sensors.camera.width": (lambda v: _is_num(v) and v > 0, "positive number"),
    "sensors.camera.depth": (lambda v: _is_num(v) and v > 0, "positive number"),
    "sensors.camera.ahead": (lambda v: _is_num(v) and v >= 0, "non-negative number"),
    "sensors.camera.supersample": (
        lambda v: isinstance(v, int) and 1 <= v <= 8,
        "integer in 1..8",
    ),
    "filters.taps": (
        lambda v: v is None or (isinstance(v, list) and len(v) == 5 and all(_num_list(t) for t in v)),
        "null or 5 lists of numbers",
    ),
    "track.kind": (
        lambda v: v in simenv.TRACK_KINDS,
        f"one of {', '.join(simenv.TRACK_KINDS)}",
    ),
    "track.width": (lambda v: _is_num(v) and v > 0, "positive number"),
    "track.scale": (lambda v: _is_num(v) and v > 0, "positive number"),
    "track.margin": (lambda v: _is_num(v) and v > 0, "positive number"),
    "track.path_value": (lambda v: _is_num(v) and 0 <= v < 256, "number in [0, 256)"),
    "track.bg_value": (lambda v: _is_num(v) and 0 <= v < 256, "number in [0, 256)"),
    "track.params": (lambda v: isinstance(v, dict), "mapping"),
    "sim.dt": (lambda v: _is_num(v) and v > 0, "positive number"),
    "sim.v0": (lambda v: _is_num(v) and v > 0, "positive number"),
    "sim.wheel_base": (lambda v: _is_num(v) and v > 0, "positive number"),
    "sim.integrator": (lambda v: v in ("arc", "euler"), "one of arc, euler"),
    "trial.max_duration": (lambda v: _is_num(v) and v > 0, "positive number"),
    "trial.threshold": (lambda v: _is_num(v) and v > 0, "positive number"),
    "trial.window": (lambda v: _is_num(v) and v > 0, "positive number"),
    "trial.warmup": (lambda v: _is_num(v) and v >= 0, "non-negative number"),
    "trial.grace": (lambda v: _is_num(v) and v >= 0, "non-negative number"),
    "trial.seed": (lambda v: isinstance(v, int), "integer"),
    "trial.distance_interval": (lambda v: _is_num(v) and v > 0, "positive number"),
    "trial.lost_line_timeout": (lambda v: _is_num(v) and v > 0, "positive number"),
    "batch.seeds": (
        lambda v: (isinstance(v, int) and v >= 1)
        or (isinstance(v, list) and v and all(isinstance(x, int) for x in v)),
        "count or list of integer seeds",
    ),
    "batch.rules": (
        lambda v: isinstance(v, list) and v and all(x in netcore.RULES for x in v),
        "non-empty list drawn from gdm, localprop, sar",
    ),
    "batch.etas": (
        lambda v: _num_list(v) and v and all(x > 0 for x in v),
        "non-empty list of positive numbers",
    ),
    "batch.jobs": (lambda v: isinstance(v, int) and v >= 1, "positive integer"),
    "output.dir": (lambda v: isinstance(v, str) and v, "non-empty string"),
    "output.trace": (lambda v: isinstance(v, bool), "boolean"),
    "output.predictor_trace": (lambda v: isinstance(v, bool), "boolean"),
}

# subtrees whose keys are free-form (validated downstream)
_OPEN_SUBTREES = ("track.params",)


def _merge(base: dict, override: dict, path: str = "") -> None:
    for key, val in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and here not in _OPEN_SUBTREES:
            if not isinstance(val, dict):
                raise ConfigError(f"{here}: expected a mapping")
            _merge(base[key], val, here)
        else:
            base[key] = val


def _validate(tree: dict, path: str = "") -> None:
    for key, val in tree.items():
        here = f"{path}.{key}" if path else key
        if here in _OPEN_SUBTREES:
            continue
        if isinstance(val, dict):
            _validate(val, here)
            continue
        check = _CHECKS.get(here)
        if check is None:
            raise ConfigError(f"unknown config key: {here}")
        pred, desc = check
        if isinstance(val, int) and not isinstance(val, bool):
            # ints are acceptable wherever floats are
            pass
        if not pred(val):
            raise ConfigError(f"{here}: expected {desc}, got {val!r}")


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Resolve the full configuration: defaults, then the YAML file, then
    programmatic overrides; rejects unknown keys and bad values."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                loaded = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{path}:{mark.line + 1}" if mark else str(path)
            raise ConfigError(f"{where}: invalid YAML: {exc}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        _merge(cfg, loaded)
    if overrides:
        _merge(cfg, overrides)
    _validate(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    """Stable 12-hex digest of a resolved configuration."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def dump_config(cfg: dict, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True, default_flow_style=False)


def rule_from_config(cfg: dict) -> netcore.UpdateRule | None:
    kind = cfg["rule"]["kind"]
    if kind == "none":
        return None
    return netcore.UpdateRule(kind, float(cfg["rule"]["eta"]))


def to_trial_config(cfg: dict) -> exper.TrialConfig:
    """Build the runtime trial configuration from a resolved config dict."""
    net = exper.NetParams(
        hidden=tuple(cfg["network"]["hidden"]),
        outputs=cfg["network"]["outputs"],
        activation=cfg["network"]["activation"],
        w0=cfg["network"]["w0"],
        output_weighting=tuple(cfg["network"]["output_weighting"]),
    )
    track = exper.TrackSpec(
        kind=cfg["track"]["kind"],
        params=copy.deepcopy(cfg["track"]["params"]),
        width=float(cfg["track"]["width"]),
        scale=float(cfg["track"]["scale"]),
        margin=float(cfg["track"]["margin"]),
        path_value=float(cfg["track"]["path_value"]),
        bg_value=float(cfg["track"]["bg_value"]),
    )
    cam = cfg["sensors"]["camera"]
    layout = simenv.SensorLayout(
        ldr_lateral=tuple(cfg["sensors"]["ldr_lateral"]),
        ldr_forward=float(cfg["sensors"]["ldr_forward"]),
        ldr_fov_radius=float(cfg["sensors"]["ldr_fov_radius"]),
        cam_width=float(cam["width"]),
        cam_depth=float(cam["depth"]),
        cam_ahead=float(cam["ahead"]),
        cam_supersample=int(cam["supersample"]),
    )
    gain = cfg["loop"]["loop_gain"]
    reflex = loop.ReflexConfig(
        k=tuple(cfg["loop"]["k"]),
        reflex_gain=float(cfg["loop"]["reflex_gain"]),
        loop_gain=None if gain == "auto" else float(gain),
        mc_limit=cfg["loop"]["mc_limit"],
    )
    sim = exper.SimParams(
        dt=float(cfg["sim"]["dt"]),
        v0=float(cfg["sim"]["v0"]),
        wheel_base=float(cfg["sim"]["wheel_base"]),
        integrator=cfg["sim"]["integrator"],
    )
    run = exper.RunParams(
        max_duration=float(cfg["trial"]["max_duration"]),
        threshold=float(cfg["trial"]["threshold"]),
        window=float(cfg["trial"]["window"]),
        warmup=float(cfg["trial"]["warmup"]),
        grace=float(cfg["trial"]["grace"]),
        distance_interval=float(cfg["trial"]["distance_interval"]),
        lost_line_timeout=float(cfg["trial"]["lost_line_timeout"]),
    )
    return exper.TrialConfig(
        net=net,
        rule=rule_from_config(cfg),
        track=track,
        layout=layout,
        reflex=reflex,
        loop_gain_magnitude=float(cfg["loop"]["loop_gain_magnitude"]),
        sim=sim,
        run=run,
        filter_taps=cfg["filters"]["taps"],
        seed=int(cfg["trial"]["seed"]),
    )


def batch_seeds(cfg: dict) -> list[int]:
    spec = cfg["batch"]["seeds"]
    if isinstance(spec, int):
        base = int(cfg["trial"]["seed"])
        return [base + i for i in range(spec)]
    return list(spec)
