"""TOML run configuration: one base scene, optional sweep axes, expansion settings.

Unknown keys are rejected everywhere. Relative asset paths are resolved
against the directory holding the config file. Example::

    version = 1

    [dataset]
    name = "demo"
    seed = 42

    [scene]
    background = "synthetic:background:1"   # or a PNG/PGM/IRF path
    bundle = "bundles/truck/045"            # or "synthetic:bundle:<seed>"
    occultant = "synthetic:occultant:3"     # optional
    f1_radius = 5
    placement = "random"                    # or [dx, dy]

    [scene.constraints]
    rss = 2.0
    scr = 3.0
    k = 0.5
    rx = 0.25
    nu_k = 1.0
    background_mean = "preserve"            # or a gray level

    [scene.thermal]
    default = "ambient"
    engine = "operating"

    [scene.sensor]
    blur_sigma = 1.0
    noise_sigma = "auto"
    depth = 16
    export_range = [0, 65535]

    [sweep]
    "constraints.rss" = [1.0, 2.0]
    replicate = [0, 1, 2]

    [expand]
    n = 4
    configs = [{ default = "ambient" }, { default = "ambient", engine = "operating" }]
"""

from __future__ import annotations

import copy
import itertools
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, EmptySweep
from .pipeline import SYNTHETIC_PREFIX, SceneRecipe, check_asset_ref
from .seeding import derive_seed
from .sensor import SensorModel
from .solver import SceneConstraints
from .thermal import REGION_CODES, parse_mode

CONFIG_VERSION = 1
SEED_ENV = "IRFORGE_SEED"

_TOP_KEYS = {"version", "dataset", "scene", "sweep", "expand"}
_DATASET_KEYS = {"name", "seed"}
_SCENE_KEYS = {"background", "bundle", "occultant", "f1_radius", "placement", "constraints", "thermal", "sensor"}
_CONSTRAINT_KEYS = {"rss", "scr", "k", "rx", "nu_k", "background_mean", "rx_tolerance"}
_SENSOR_KEYS = {"blur_sigma", "noise_sigma", "depth", "export_range"}
_THERMAL_KEYS = set(REGION_CODES) | {"default"}
_EXPAND_KEYS = {"n", "seed", "configs"}
_REPLICATE = "replicate"


@dataclass
class ExpandConfig:
    n: int
    seed: int
    configs: list


@dataclass
class RunConfig:
    dataset: str
    seed: int
    recipes: list = field(default_factory=list)
    sweep_axes: list = field(default_factory=list)
    expand: ExpandConfig | None = None
    source: Path | None = None


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in [{where}]; allowed: {sorted(allowed)}")


def _number(value, where, integer=False):
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok:
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"{where} must be {kind}, got {value!r}")
    return value


def validate_thermal(table, where="scene.thermal") -> dict:
    _check_keys(table, _THERMAL_KEYS, where)
    for key, mode in table.items():
        try:
            parse_mode(mode)
        except ValueError as exc:
            raise ConfigError(f"{where}.{key}: {exc}") from None
    return dict(table)


def _resolve_ref(ref, base: Path, kind: str, where: str) -> str:
    if not isinstance(ref, str):
        raise ConfigError(f"{where} must be a string")
    if not ref.startswith(SYNTHETIC_PREFIX) and not Path(ref).is_absolute():
        ref = str(base / ref)
    check_asset_ref(ref, kind)
    return ref


def scene_recipe(scene: dict, base: Path, seed: int, scene_id: str) -> SceneRecipe:
    """Validate a fully-specified ``[scene]`` table and turn it into a recipe."""
    _check_keys(scene, _SCENE_KEYS, "scene")
    for key in ("background", "bundle", "constraints", "thermal"):
        if key not in scene:
            raise ConfigError(f"[scene] is missing required key {key!r}")

    cons = scene["constraints"]
    _check_keys(cons, _CONSTRAINT_KEYS, "scene.constraints")
    for key in ("rss", "scr", "k"):
        if key not in cons:
            raise ConfigError(f"[scene.constraints] is missing {key!r}")
    for key, value in cons.items():
        if key != "background_mean" or value != "preserve":
            _number(value, f"scene.constraints.{key}")
    constraints = SceneConstraints(**cons).validate()

    sens = scene.get("sensor", {})
    _check_keys(sens, _SENSOR_KEYS, "scene.sensor")
    sens = dict(sens)
    if "export_range" in sens:
        rng_ = sens["export_range"]
        if not (isinstance(rng_, list) and len(rng_) == 2):
            raise ConfigError("scene.sensor.export_range must be [min, max]")
        sens["export_range"] = tuple(_number(v, "scene.sensor.export_range") for v in rng_)
    try:
        sensor = SensorModel(**sens)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"scene.sensor: {exc}") from None

    placement = scene.get("placement", "random")
    if placement != "random":
        if not (isinstance(placement, list) and len(placement) == 2):
            raise ConfigError('scene.placement must be "random" or [dx, dy]')
        placement = tuple(_number(v, "scene.placement", integer=True) for v in placement)

    occultant = scene.get("occultant")
    return SceneRecipe(
        background=_resolve_ref(scene["background"], base, "background", "scene.background"),
        bundle=_resolve_ref(scene["bundle"], base, "bundle", "scene.bundle"),
        occultant=None if occultant is None else _resolve_ref(occultant, base, "occultant", "scene.occultant"),
        constraints=constraints,
        thermal=validate_thermal(scene["thermal"]),
        sensor=sensor,
        seed=seed,
        scene_id=scene_id,
        f1_radius=_number(scene.get("f1_radius", 5), "scene.f1_radius"),
        placement=placement,
    )


def _set_path(table, dotted, value):
    parts = dotted.split(".")
    node = table
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"sweep axis {dotted!r} walks through a non-table")
    node[parts[-1]] = value


def _check_axis(name):
    if name == _REPLICATE:
        return
    parts = name.split(".")
    allowed = {
        "constraints": _CONSTRAINT_KEYS,
        "sensor": _SENSOR_KEYS,
        "thermal": _THERMAL_KEYS,
    }
    if parts[0] not in _SCENE_KEYS:
        raise ConfigError(f"sweep axis {name!r} does not name a [scene] key")
    if len(parts) == 2 and parts[1] not in allowed.get(parts[0], set()):
        raise ConfigError(f"sweep axis {name!r} does not name a [scene.{parts[0]}] key")
    if len(parts) > 2:
        raise ConfigError(f"sweep axis {name!r} is nested too deeply")


def expand_sweep(base_scene: dict, sweep: dict):
    """Cartesian product of the sweep axes, in declaration order.

    Yields ``(assignment, scene_table)`` pairs; ``assignment`` maps axis name
    to value and is what the per-scene seed is derived from.
    """
    axes = list(sweep.items())
    for name, values in axes:
        _check_axis(name)
        if not isinstance(values, list):
            raise ConfigError(f"sweep axis {name!r} must be a list")
        if not values:
            raise EmptySweep(f"sweep axis {name!r} is empty")
    for combo in itertools.product(*(values for _, values in axes)):
        scene = copy.deepcopy(base_scene)
        assignment = {}
        for (name, _), value in zip(axes, combo):
            assignment[name] = value
            if name != _REPLICATE:
                _set_path(scene, name, copy.deepcopy(value))
        yield assignment, scene


def scene_seed(master_seed: int, assignment: dict) -> int:
    """Seed of one sweep point: a hash of the master seed and the axis values it takes."""
    return derive_seed(master_seed, json.loads(json.dumps(assignment, sort_keys=True)))


def _resolve_master_seed(value, where):
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
    return _number(value, where, integer=True)


def parse_config(data: dict, base: Path = Path("."), need_scene=True) -> RunConfig:
    _check_keys(data, _TOP_KEYS, "top level")
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}; expected {CONFIG_VERSION}")
    dataset = data.get("dataset", {})
    _check_keys(dataset, _DATASET_KEYS, "dataset")
    name = dataset.get("name", "dataset")
    if not isinstance(name, str) or not name or "/" in name:
        raise ConfigError("dataset.name must be a non-empty string without '/'")
    seed = _resolve_master_seed(dataset.get("seed", 0), "dataset.seed")
    cfg = RunConfig(dataset=name, seed=seed, source=base)

    if "scene" in data:
        sweep = data.get("sweep", {})
        if not isinstance(sweep, dict):
            raise ConfigError("[sweep] must be a table")
        cfg.sweep_axes = list(sweep)
        for index, (assignment, scene) in enumerate(expand_sweep(data["scene"], sweep)):
            sid = f"{name}_{index:05d}"
            cfg.recipes.append(scene_recipe(scene, base, scene_seed(seed, assignment), sid))
    elif need_scene:
        raise ConfigError("config has no [scene] table")

    if "expand" in data:
        exp = data["expand"]
        _check_keys(exp, _EXPAND_KEYS, "expand")
        n = _number(exp.get("n", 1), "expand.n", integer=True)
        if n < 1:
            raise ConfigError("expand.n must be >= 1")
        configs = exp.get("configs")
        if not isinstance(configs, list) or not configs:
            raise ConfigError("expand.configs must be a non-empty list of thermal tables")
        configs = [validate_thermal(c, f"expand.configs[{i}]") for i, c in enumerate(configs)]
        exp_seed = _resolve_master_seed(exp.get("seed", seed), "expand.seed")
        cfg.expand = ExpandConfig(n, exp_seed, configs)
    return cfg


def load_config(path, need_scene=True) -> RunConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, path.resolve().parent, need_scene=need_scene)
