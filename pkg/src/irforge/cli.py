"""Command-line entry point.

Exit codes: 0 success, 1 runtime or scene failure, 2 configuration or asset error.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import pipeline
from .config import load_config
from .errors import (
    AssetError,
    ConfigError,
    DimensionMismatch,
    IRForgeError,
    LayoutInconsistent,
    MissingRegionLambda,
)
from .imagecore import as_mask, load_image, load_mask, save_raster, write_irf
from .layout import DEFAULT_F1_RADIUS, build_layout
from .metrics import Calibration, measure_scene
from .thermal import expand_database, load_bundle

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(config_path, need_scene=True):
    try:
        cfg = load_config(config_path, need_scene=need_scene)
    except IRForgeError as exc:
        _fail(EXIT_CONFIG, f"{exc.code}: {exc}")
    click.echo(f"irforge: master seed: {cfg.seed}", err=True)
    return cfg


def _summary(manifest):
    header = f"{'scene':<22} {'status':<7} {'RSS req/got':>21} {'SCR req/got':>21} {'K req/got':>21} {'Rx req/got':>15}"
    lines = [header, "-" * len(header)]
    for rec in manifest["scenes"]:
        if rec["status"] != "ok":
            lines.append(f"{rec['id']:<22} FAILED  step {rec['step']}: {rec['error']}: {rec['message']}")
            continue
        req, got = rec["requested"], rec["achieved_pre_sensor"]
        cells = [f"{req[m]:>9.4g}/{got[m]:<11.6g}" for m in ("rss", "scr", "k")]
        cells.append(f"{req['rx']:>6.3g}/{got['rx']:<8.4f}")
        lines.append(f"{rec['id']:<22} {'ok':<7} " + " ".join(cells))
    return "\n".join(lines)


def _report_preflight(cfg):
    failed = 0
    for recipe in cfg.recipes:
        issues = pipeline.preflight(recipe)
        if issues:
            failed += 1
            for issue in issues:
                click.echo(f"{recipe.scene_id}: {issue.code}: {issue.message}")
        else:
            click.echo(f"{recipe.scene_id}: feasible")
    click.echo(f"{len(cfg.recipes) - failed}/{len(cfg.recipes)} scenes feasible")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose):
    """Constraint-driven hybrid infrared scene generator."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format="irforge: %(message)s")


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--out", "out_root", default="out", show_default=True, type=click.Path(file_okay=False))
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--dry-run", is_flag=True, help="Report feasibility only; write nothing.")
@click.option("--keep-intermediate", is_flag=True, help="Archive the pre-sensor raster (.irf).")
def generate(config, out_root, jobs, dry_run, keep_intermediate):
    """Build every scene of CONFIG into OUT/<dataset>/."""
    cfg = _load(config)
    if dry_run:
        sys.exit(_report_preflight(cfg))
    out_dir = Path(out_root) / cfg.dataset
    manifest = pipeline.batch_generate(
        cfg.recipes, out_dir, dataset=cfg.dataset, master_seed=cfg.seed, jobs=jobs, keep_intermediate=keep_intermediate
    )
    click.echo(_summary(manifest))
    click.echo(f"manifest: {out_dir / 'manifest.json'}")
    sys.exit(EXIT_OK if manifest["failure_count"] == 0 else EXIT_RUNTIME)


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
def check(config):
    """Feasibility report for every scene of CONFIG."""
    cfg = _load(config)
    sys.exit(_report_preflight(cfg))


@main.command()
@click.argument("image", type=click.Path(dir_okay=False))
@click.option("--visible", "visible_path", required=True, type=click.Path(dir_okay=False), help="Visible target mask.")
@click.option("--full", "full_path", type=click.Path(dir_okay=False), help="Full target mask (default: visible).")
@click.option("--occultant", "occ_path", type=click.Path(dir_okay=False), help="Occultant mask.")
@click.option("--nu-k", default=1.0, show_default=True, type=float, help="Gray levels per Kelvin.")
@click.option("--f1-radius", default=DEFAULT_F1_RADIUS, show_default=True, type=float)
@click.option("--scale", default=1.0, show_default=True, type=float, help="Gray level = scale * raw + offset.")
@click.option("--offset", default=0.0, show_default=True, type=float)
def metrics(image, visible_path, full_path, occ_path, nu_k, f1_radius, scale, offset):
    """Measure RSS, Q_D, SCR, R_x and K of IMAGE and print them as JSON."""
    try:
        cal = Calibration(nu_k)
        img = load_image(image, scale=scale, offset=offset)
        visible = load_mask(visible_path)
        full = load_mask(full_path) if full_path else visible
        occ = load_mask(occ_path) if occ_path else None
        for name, m in (("visible", visible), ("full", full), ("occultant", occ)):
            if m is not None and m.shape != img.shape:
                raise DimensionMismatch(f"{name} mask {m.shape} does not match image {img.shape}")
        layout = build_layout(full, occ, f1_radius)
        if not np.array_equal(layout.c_visible, as_mask(visible)):
            raise LayoutInconsistent("visible mask differs from full minus occultant")
    except (IRForgeError, ValueError) as exc:
        _fail(EXIT_CONFIG, f"{getattr(exc, 'code', type(exc).__name__)}: {exc}")
    try:
        result = measure_scene(img, layout, cal)
    except IRForgeError as exc:
        _fail(EXIT_RUNTIME, f"{exc.code}: {exc}")
    click.echo(json.dumps(result.to_dict(), indent=2))


@main.command()
@click.argument("bundle_dir", type=click.Path(file_okay=False))
@click.argument("config", type=click.Path(dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--lambda-override", type=click.FloatRange(0, 1), help="Force every lambda (debugging).")
def expand(bundle_dir, config, out_dir, lambda_override):
    """Write mixed thermal signatures of BUNDLE_DIR per the [expand] table of CONFIG."""
    cfg = _load(config, need_scene=False)
    if cfg.expand is None:
        _fail(EXIT_CONFIG, "ConfigError: config has no [expand] table")
    try:
        bundle = load_bundle(bundle_dir)
        modes = [pipeline.resolve_modes(c, bundle.present_regions) for c in cfg.expand.configs]
        items = expand_database(bundle, modes, cfg.expand.n, cfg.expand.seed, lambda_override=lambda_override)
    except (AssetError, DimensionMismatch, MissingRegionLambda, ConfigError) as exc:
        _fail(EXIT_CONFIG, f"{exc.code}: {exc}")
    except IRForgeError as exc:
        _fail(EXIT_RUNTIME, f"{exc.code}: {exc}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_raster(out / "regions.png", bundle.regions)
    entries = []
    for i, (img, state, ci) in enumerate(items):
        stem = f"sig_{i:05d}"
        save_raster(out / f"{stem}.png", np.clip(np.rint(img), 0, 65535).astype(np.uint16))
        write_irf(out / f"{stem}.irf", img)
        entries.append(
            {
                "index": i,
                "config": ci,
                "modes": {k: v.value for k, v in modes[ci].items()},
                "lambdas": state,
                "image": f"{stem}.png",
                "raw": f"{stem}.irf",
            }
        )
    manifest = {
        "schema_version": pipeline.SCHEMA_VERSION,
        "view_id": bundle.view_id,
        "seed": cfg.expand.seed,
        "n_per_config": cfg.expand.n,
        "lambda_override": lambda_override,
        "signatures": entries,
    }
    pipeline.write_manifest(out / "manifest.json", manifest)
    click.echo(f"wrote {len(entries)} signatures to {out}")


if __name__ == "__main__":
    main()
