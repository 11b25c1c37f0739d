"""Scene assembly and dataset generation.

One scene goes through: thermal mixing, target positioning, occultant
positioning, gain/offset solving and application, sensor effect, export.
Every stochastic draw comes from a generator derived from the scene seed and
a fixed stream name, and is written back into the scene record.
"""

from __future__ import annotations

import functools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AssetError,
    EmptySweep,
    IRForgeError,
    LayoutInconsistent,
    MissingRegionLambda,
    SceneBuildError,
    TargetTooLarge,
    Unachievable,
)
from .imagecore import (
    as_mask,
    blit,
    load_image,
    load_mask,
    region_stats,
    save_mask,
    save_raster,
    shift_mask,
    write_irf,
)
from .layout import DEFAULT_F1_RADIUS, SceneLayout, build_layout
from .metrics import measure_scene
from .seeding import derive_rng, derive_seed
from .sensor import SensorModel, apply_mtf, apply_noise, quantize
from .solver import (
    Issue,
    Placement,
    SceneConstraints,
    check_feasibility,
    place_occultant,
    reachable_rx,
    solve_background,
    solve_target,
    valid_offsets,
)
from .synth import Occultant, synthetic_bundle, synthetic_occultant, textured_background
from .thermal import ViewBundle, draw_state, load_bundle, mix, parse_mode

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FIDELITY_RTOL = 1e-6
FIDELITY_ATOL = 1e-9
SYNTHETIC_PREFIX = "synthetic:"


# ------------------------------------------------------------------- assets


def parse_synthetic_ref(ref: str):
    """``synthetic:<kind>[:<seed>]`` -> (kind, seed)."""
    parts = ref[len(SYNTHETIC_PREFIX) :].split(":")
    kind = parts[0]
    if kind not in ("background", "bundle", "occultant") or len(parts) > 2:
        raise AssetError(f"malformed synthetic asset ref {ref!r}")
    try:
        seed = int(parts[1]) if len(parts) == 2 else 0
    except ValueError:
        raise AssetError(f"malformed synthetic asset ref {ref!r}") from None
    return kind, seed


def check_asset_ref(ref: str, kind: str) -> None:
    """Cheap existence check used by config validation (no pixels are read)."""
    if ref.startswith(SYNTHETIC_PREFIX):
        got, _ = parse_synthetic_ref(ref)
        if got != kind:
            raise AssetError(f"{ref!r} is a synthetic {got}, expected a {kind}")
        return
    path = Path(ref)
    if kind == "background" and not path.is_file():
        raise AssetError(f"background {ref!r} not found")
    if kind in ("bundle", "occultant") and not path.is_dir():
        raise AssetError(f"{kind} directory {ref!r} not found")


def _frozen(arr):
    arr.setflags(write=False)
    return arr


@functools.lru_cache(maxsize=32)
def load_background(ref: str) -> np.ndarray:
    if ref.startswith(SYNTHETIC_PREFIX):
        _, seed = parse_synthetic_ref(ref)
        return _frozen(textured_background(seed=seed))
    return _frozen(load_image(ref))


@functools.lru_cache(maxsize=32)
def load_view_bundle(ref: str) -> ViewBundle:
    if ref.startswith(SYNTHETIC_PREFIX):
        _, seed = parse_synthetic_ref(ref)
        return synthetic_bundle(seed=seed)
    return load_bundle(ref)


@functools.lru_cache(maxsize=32)
def load_occultant(ref: str) -> Occultant:
    """An occultant directory holds ``image.png`` (gray levels) and ``mask.png``."""
    if ref.startswith(SYNTHETIC_PREFIX):
        _, seed = parse_synthetic_ref(ref)
        return synthetic_occultant(seed=seed)
    path = Path(ref)
    image = load_image(path / "image.png")
    mask = load_mask(path / "mask.png")
    if image.shape != mask.shape:
        raise AssetError(f"{path}: image {image.shape} and mask {mask.shape} differ")
    if not mask.any():
        raise AssetError(f"{path}: empty occultant mask")
    return Occultant(_frozen(image), _frozen(mask), str(path))


def save_occultant(path, occ: Occultant) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    save_raster(path / "image.png", np.clip(np.rint(occ.image), 0, 65535).astype(np.uint16))
    save_mask(path / "mask.png", occ.mask)


# ------------------------------------------------------------------- recipe


@dataclass(frozen=True)
class SceneRecipe:
    background: str
    bundle: str
    constraints: SceneConstraints
    thermal: dict
    sensor: SensorModel = field(default_factory=SensorModel)
    occultant: str | None = None
    seed: int = 0
    scene_id: str = "scene"
    f1_radius: float = DEFAULT_F1_RADIUS
    placement: object = "random"  # "random" or (dx, dy)
    # replay overrides; None means "draw from the seed"
    lambdas: dict | None = None
    occultant_offset: tuple | None = None
    noise_seed: int | None = None

    def to_dict(self):
        return {
            "scene_id": self.scene_id,
            "background": self.background,
            "bundle": self.bundle,
            "occultant": self.occultant,
            "constraints": self.constraints.to_dict(),
            "thermal": dict(self.thermal),
            "sensor": self.sensor.to_dict(),
            "f1_radius": self.f1_radius,
            "placement": self.placement if self.placement == "random" else list(self.placement),
            "seed": self.seed,
        }


def resolve_modes(thermal: dict, regions) -> dict:
    """Per-region modes for the regions present in a bundle; ``default`` fills gaps."""
    default = thermal.get("default")
    modes = {}
    for name in regions:
        if name in thermal:
            modes[name] = parse_mode(thermal[name])
        elif default is not None:
            modes[name] = parse_mode(default)
        else:
            raise MissingRegionLambda(f"no thermal mode for region {name!r}")
    return modes


def target_placement(frame_shape, silhouette, policy="random", rng=None):
    """Top-left (dx, dy) of the target bounding box; uniform over in-frame offsets."""
    sil = as_mask(silhouette, "silhouette")
    nx, ny = valid_offsets(frame_shape, sil.shape)
    if policy == "random":
        if rng is None:
            raise ValueError("random placement needs a generator")
        return int(rng.integers(nx)), int(rng.integers(ny))
    dx, dy = (int(v) for v in policy)
    if not (0 <= dx < nx and 0 <= dy < ny):
        raise TargetTooLarge(f"fixed placement {(dx, dy)} puts the target outside the frame")
    return dx, dy


# ---------------------------------------------------------------- building


@dataclass
class Prepared:
    """Everything up to (and including) the solved transforms, before compositing."""

    recipe: SceneRecipe
    background: np.ndarray
    bundle: ViewBundle
    occultant: Occultant | None
    lambdas: dict
    signature: np.ndarray
    placement: Placement
    layout: SceneLayout
    stats: dict
    background_tf: object = None
    target_tf: object = None


@dataclass
class SceneResult:
    pre_sensor: np.ndarray
    post_sensor: np.ndarray
    quantized: object
    layout: SceneLayout
    record: dict


class _Step:
    """Context manager tagging any library error with the pipeline step it came from."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, (IRForgeError, ValueError)) and not isinstance(exc, SceneBuildError):
            raise SceneBuildError(self.name, exc) from exc
        return False


def _prepare(recipe: SceneRecipe, solve=True) -> Prepared:
    c = recipe.constraints
    with _Step("assets"):
        background = load_background(recipe.background)
        bundle = load_view_bundle(recipe.bundle)
        occ = load_occultant(recipe.occultant) if recipe.occultant else None
    with _Step("thermal"):
        modes = resolve_modes(recipe.thermal, bundle.present_regions)
        if recipe.lambdas is not None:
            lambdas = {name: float(recipe.lambdas[name]) for name in modes}
        else:
            lambdas = draw_state(modes, derive_rng(recipe.seed, "thermal"))
        signature = mix(bundle, lambdas)
    frame = background.shape
    with _Step("B target placement"):
        offset = target_placement(frame, bundle.silhouette, recipe.placement, derive_rng(recipe.seed, "target"))
    with _Step("A occultant placement"):
        if occ is None:
            if c.rx > 0:
                raise Unachievable(f"R_x* = {c.rx:g} requested but the recipe has no occultant")
            placement = Placement(offset, None, 0.0)
        elif recipe.occultant_offset is not None:
            full = shift_mask(bundle.silhouette, offset, frame)
            occ_frame = shift_mask(occ.mask, recipe.occultant_offset, frame)
            rx = float((full & occ_frame).sum() / full.sum())
            if abs(rx - c.rx) > c.rx_tolerance + 1e-12:
                raise Unachievable(f"forced occultant offset gives R_x = {rx:.4f}")
            placement = Placement(offset, tuple(int(v) for v in recipe.occultant_offset), rx)
        else:
            placement = place_occultant(
                bundle.silhouette,
                occ.mask,
                frame,
                c.rx,
                target_offset=offset,
                rng=derive_rng(recipe.seed, "occultant"),
                tolerance=c.rx_tolerance,
            )
    with _Step("layout"):
        c_full = shift_mask(bundle.silhouette, placement.target, frame)
        occ_frame = None if occ is None else shift_mask(occ.mask, placement.occultant, frame)
        layout = build_layout(c_full, occ_frame, recipe.f1_radius)
        if not layout.c_visible.any():
            raise LayoutInconsistent("target fully hidden; contrast metrics need visible pixels")
        if not layout.f1.any():
            raise LayoutInconsistent("local background band F1 is empty")
        target_img = blit(np.zeros(frame), signature, bundle.silhouette, placement.target)
        stats = {
            "F": region_stats(background, layout.background),
            "C": region_stats(target_img, layout.c_visible),
        }
    prep = Prepared(recipe, background, bundle, occ, lambdas, target_img, placement, layout, stats)
    if solve:
        with _Step("C gains/offsets"):
            prep.background_tf = solve_background(stats["F"], c)
            mu_f1 = region_stats(prep.background_tf.apply(background), layout.f1).mean
            prep.target_tf = solve_target(stats["C"], mu_f1, c)
    return prep


def _compose(prep: Prepared) -> np.ndarray:
    layout = prep.layout
    img = prep.background_tf.apply(prep.background)
    img[layout.c_full] = prep.target_tf.apply(prep.signature[layout.c_full])
    if prep.occultant is not None:
        occ_img = blit(np.zeros(img.shape), prep.occultant.image, prep.occultant.mask, prep.placement.occultant)
        img[layout.occultant] = prep.background_tf.apply(occ_img[layout.occultant])
    return img


def preflight(recipe: SceneRecipe) -> list:
    """Feasibility issues for a recipe, without producing any image."""
    c = recipe.constraints
    issues = list(c.problems())
    if issues:
        return issues
    try:
        prep = _prepare(recipe, solve=False)
    except SceneBuildError as exc:
        return [Issue(exc.cause_code, str(exc))]
    rx_reach = None
    if prep.occultant is not None:
        rx_reach = reachable_rx(prep.bundle.silhouette, prep.occultant.mask, prep.background.shape, prep.placement.target)
    issues = check_feasibility(c, prep.stats, rx_reachable=rx_reach)
    if issues:
        return issues
    try:
        prep = _prepare(recipe)
    except SceneBuildError as exc:
        return [Issue(exc.cause_code, str(exc))]
    img = _compose(prep)
    return check_feasibility(
        c, prep.stats, predicted_range=(float(img.min()), float(img.max())), export_range=recipe.sensor.export_range
    )


def _rel_err(got, want):
    return abs(got - want) / max(abs(want), 1e-300)


def _fidelity(achieved, c: SceneConstraints):
    out = {}
    ok = True
    for name, want in (("rss", c.rss), ("scr", c.scr), ("k", c.k)):
        got = getattr(achieved, name)
        out[f"{name}_rel_err"] = _rel_err(got, want)
        ok &= math.isclose(got, want, rel_tol=FIDELITY_RTOL, abs_tol=FIDELITY_ATOL)
    out["rx_abs_err"] = abs(achieved.rx - c.rx)
    ok &= out["rx_abs_err"] <= c.rx_tolerance + 1e-12
    out["within_tolerance"] = bool(ok)
    return out


def build_scene(recipe: SceneRecipe) -> SceneResult:
    """Run every step for one recipe and return images, layout and ground-truth record."""
    c = recipe.constraints
    with _Step("constraints"):
        c.validate()
    prep = _prepare(recipe)
    with _Step("C gains/offsets"):
        pre = _compose(prep)
        achieved = measure_scene(pre, prep.layout, c.calibration)
        fidelity = _fidelity(achieved, c)
        if not fidelity["within_tolerance"]:
            raise LayoutInconsistent(f"pre-sensor metrics missed the request: {fidelity}")
    with _Step("D sensor"):
        sensor = recipe.sensor.resolve(c.contrast_gray / c.scr)
        noise_seed = recipe.noise_seed if recipe.noise_seed is not None else derive_seed(recipe.seed, "noise")
        post = apply_noise(apply_mtf(pre, sensor), sensor, np.random.default_rng(noise_seed))
        q = quantize(post, sensor)
    try:
        achieved_post = measure_scene(post, prep.layout, c.calibration).to_dict()
    except IRForgeError as exc:
        log.debug("post-sensor metrics unavailable for %s: %s", recipe.scene_id, exc)
        achieved_post = None
    record = {
        "id": recipe.scene_id,
        "status": "ok",
        "seed": recipe.seed,
        "noise_seed": noise_seed,
        "recipe": recipe.to_dict(),
        "view_id": prep.bundle.view_id,
        "lambdas": {k: float(v) for k, v in prep.lambdas.items()},
        "placement": prep.placement.to_dict(),
        "transforms": {
            "background": prep.background_tf.to_dict(),
            "target": prep.target_tf.to_dict(),
        },
        "requested": {"rss": c.rss, "scr": c.scr, "k": c.k, "rx": c.rx},
        "achieved_pre_sensor": achieved.to_dict(),
        "achieved_post_sensor": achieved_post,
        "fidelity": fidelity,
        "sensor": sensor.to_dict(),
        "quantization": {"depth": sensor.depth, "export_range": list(sensor.to_dict()["export_range"]), **q.params()},
        "region_stats": {k: v.to_dict() for k, v in prep.stats.items()},
    }
    return SceneResult(pre, post, q, prep.layout, record)


def replay_recipe(record: dict) -> SceneRecipe:
    """Recipe that reproduces a recorded scene from its logged draws alone."""
    r = record["recipe"]
    placement = record["placement"]
    return SceneRecipe(
        background=r["background"],
        bundle=r["bundle"],
        occultant=r["occultant"],
        constraints=SceneConstraints(**r["constraints"]),
        thermal=dict(r["thermal"]),
        sensor=SensorModel(
            blur_sigma=r["sensor"]["blur_sigma"],
            noise_sigma=record["sensor"]["noise_sigma"],
            depth=r["sensor"]["depth"],
            export_range=tuple(r["sensor"]["export_range"]),
        ),
        seed=record["seed"],
        scene_id=record["id"],
        f1_radius=r["f1_radius"],
        placement=tuple(placement["target"]),
        lambdas=dict(record["lambdas"]),
        occultant_offset=None if placement["occultant"] is None else tuple(placement["occultant"]),
        noise_seed=record["noise_seed"],
    )


# ------------------------------------------------------------------ export


def write_scene(result: SceneResult, out_dir, keep_intermediate=False) -> dict:
    """Write image, masks and optionally the pre-sensor raster; returns relative paths."""
    out_dir = Path(out_dir)
    sid = result.record["id"]
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    files = {"image": f"images/{sid}.png", "masks": {}, "intermediate": None}
    save_raster(out_dir / files["image"], result.quantized.data)
    for name in ("c_visible", "c_full", "occultant"):
        rel = f"masks/{sid}_{name}.png"
        save_mask(out_dir / rel, getattr(result.layout, name))
        files["masks"][name] = rel
    if keep_intermediate:
        (out_dir / "intermediate").mkdir(exist_ok=True)
        rel = f"intermediate/{sid}.irf"
        write_irf(out_dir / rel, result.pre_sensor)
        files["intermediate"] = rel
    return files


def failure_record(recipe: SceneRecipe, exc: Exception) -> dict:
    if isinstance(exc, SceneBuildError):
        step, code, message = exc.step, exc.cause_code, str(exc.cause)
    else:
        step, code, message = "unknown", getattr(exc, "code", type(exc).__name__), str(exc)
    return {
        "id": recipe.scene_id,
        "status": "failed",
        "seed": recipe.seed,
        "recipe": recipe.to_dict(),
        "step": step,
        "error": code,
        "message": message,
    }


def run_scene(recipe: SceneRecipe, out_dir, keep_intermediate=False) -> dict:
    """Build and write one scene; failures come back as a failure record."""
    try:
        result = build_scene(recipe)
    except IRForgeError as exc:
        log.warning("scene %s failed: %s", recipe.scene_id, exc)
        return failure_record(recipe, exc)
    result.record["files"] = write_scene(result, out_dir, keep_intermediate)
    return result.record


def _run_indexed(args):
    index, recipe, out_dir, keep = args
    record = run_scene(recipe, out_dir, keep)
    return {"index": index, **record}


def batch_generate(recipes, out_dir, dataset="dataset", master_seed=0, jobs=1, keep_intermediate=False) -> dict:
    """Build every recipe, write images and ``manifest.json``; never aborts on a bad scene."""
    recipes = list(recipes)
    if not recipes:
        raise EmptySweep("the sweep expands to zero scenes")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(i, r, str(out_dir), keep_intermediate) for i, r in enumerate(recipes)]
    if jobs <= 1:
        records = [_run_indexed(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_indexed, tasks))
    records.sort(key=lambda r: r["index"])
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "dataset": dataset,
        "master_seed": master_seed,
        "scene_count": len(records),
        "failure_count": sum(r["status"] != "ok" for r in records),
        "scenes": records,
    }
    write_manifest(out_dir / "manifest.json", manifest)
    return manifest


def write_manifest(path, manifest) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------- schema

_NUM = {"type": "number"}
_METRICS = {
    "type": "object",
    "required": ["rss", "qd", "scr", "rx", "k", "delta_mu"],
    "properties": {k: _NUM for k in ("rss", "qd", "scr", "rx", "k", "delta_mu")},
}
_AFFINE = {"type": "object", "required": ["gain", "offset"], "properties": {"gain": _NUM, "offset": _NUM}}
_OFFSET = {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}

SCENE_OK_SCHEMA = {
    "type": "object",
    "required": [
        "index", "id", "status", "seed", "noise_seed", "recipe", "lambdas", "placement",
        "transforms", "requested", "achieved_pre_sensor", "achieved_post_sensor",
        "fidelity", "quantization", "files",
    ],
    "properties": {
        "index": {"type": "integer", "minimum": 0},
        "id": {"type": "string"},
        "status": {"const": "ok"},
        "seed": {"type": "integer"},
        "noise_seed": {"type": "integer"},
        "recipe": {"type": "object"},
        "lambdas": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0, "maximum": 1}},
        "placement": {
            "type": "object",
            "required": ["target", "occultant", "rx"],
            "properties": {"target": _OFFSET, "occultant": {"anyOf": [_OFFSET, {"type": "null"}]}, "rx": _NUM},
        },
        "transforms": {
            "type": "object",
            "required": ["background", "target"],
            "properties": {"background": _AFFINE, "target": _AFFINE},
        },
        "requested": {"type": "object", "required": ["rss", "scr", "k", "rx"]},
        "achieved_pre_sensor": _METRICS,
        "achieved_post_sensor": {"anyOf": [_METRICS, {"type": "null"}]},
        "fidelity": {
            "type": "object",
            "required": ["within_tolerance"],
            "properties": {"within_tolerance": {"const": True}},
        },
        "quantization": {
            "type": "object",
            "required": ["depth", "export_range", "scale", "offset", "saturated_low", "saturated_high"],
        },
        "files": {
            "type": "object",
            "required": ["image", "masks", "intermediate"],
            "properties": {
                "image": {"type": "string"},
                "masks": {"type": "object", "required": ["c_visible", "c_full", "occultant"]},
            },
        },
    },
}

SCENE_FAILED_SCHEMA = {
    "type": "object",
    "required": ["index", "id", "status", "seed", "recipe", "step", "error", "message"],
    "properties": {
        "status": {"const": "failed"},
        "step": {"type": "string"},
        "error": {"type": "string"},
        "message": {"type": "string"},
    },
}

MANIFEST_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "irforge dataset manifest",
    "type": "object",
    "required": ["schema_version", "dataset", "master_seed", "scene_count", "failure_count", "scenes"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "dataset": {"type": "string"},
        "master_seed": {"type": "integer"},
        "scene_count": {"type": "integer", "minimum": 1},
        "failure_count": {"type": "integer", "minimum": 0},
        "scenes": {"type": "array", "items": {"oneOf": [SCENE_OK_SCHEMA, SCENE_FAILED_SCHEMA]}},
    },
}


def validate_manifest(manifest: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if the manifest breaks the schema."""
    import jsonschema

    jsonschema.validate(manifest, MANIFEST_SCHEMA)
    if manifest["scene_count"] != len(manifest["scenes"]):
        raise jsonschema.ValidationError("scene_count does not match the number of scenes")
    idx = [s["index"] for s in manifest["scenes"]]
    if idx != sorted(idx):
        raise jsonschema.ValidationError("scenes are not ordered by index")
