import json
import textwrap

import numpy as np
import pytest
from click.testing import CliRunner

from irforge.cli import main
from irforge.config import expand_sweep, load_config, parse_config, scene_seed
from irforge.errors import ConfigError, InfeasibleK
from irforge.imagecore import load_image, save_mask, save_raster, write_irf
from irforge.thermal import Mode, save_bundle

SCENE = """
version = 1
[dataset]
name = "demo"
seed = 42

[scene]
background = "synthetic:background:1"
bundle = "synthetic:bundle:1"
occultant = "synthetic:occultant:3"

[scene.constraints]
rss = 2.0
scr = 3.0
k = {k}
rx = 0.25

[scene.thermal]
default = "ambient"
engine = "operating"
"""


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def run(*args, env=None):
    return CliRunner().invoke(main, [str(a) for a in args], env=env)


def test_generate_single_scene(tmp_path):
    cfg = write(tmp_path, SCENE.format(k=0.5))
    res = run("generate", cfg, "--out", tmp_path / "out")
    assert res.exit_code == 0, res.output
    ds = tmp_path / "out" / "demo"
    assert [p.name for p in (ds / "images").iterdir()] == ["demo_00000.png"]
    manifest = json.loads((ds / "manifest.json").read_text())
    got = manifest["scenes"][0]["achieved_pre_sensor"]
    assert got["rss"] == pytest.approx(2.0, rel=1e-6)
    assert "demo_00000" in res.output and "master seed: 42" in res.output


def test_infeasible_k_rejected_before_io(tmp_path):
    cfg = write(tmp_path, SCENE.format(k=1.5))
    res = run("generate", cfg, "--out", tmp_path / "out")
    assert res.exit_code == 2
    assert "InfeasibleK" in res.output
    assert not (tmp_path / "out").exists()


def test_unknown_key_rejected(tmp_path):
    cfg = write(tmp_path, SCENE.format(k=0.5) + "\n[scene.sensor]\nblur = 2\n")
    res = run("generate", cfg, "--out", tmp_path / "out")
    assert res.exit_code == 2 and "unknown key" in res.output
    assert not (tmp_path / "out").exists()


def test_dry_run_writes_nothing(tmp_path):
    cfg = write(tmp_path, SCENE.format(k=0.5))
    res = run("generate", cfg, "--out", tmp_path / "out", "--dry-run")
    assert res.exit_code == 0 and "1/1 scenes feasible" in res.output
    assert not (tmp_path / "out").exists()
    assert run("check", cfg).exit_code == 0


def test_check_reports_unreachable_rx(tmp_path):
    cfg = write(tmp_path, SCENE.format(k=0.5).replace("rx = 0.25", "rx = 0.99"))
    res = run("check", cfg)
    assert res.exit_code == 1 and "Unachievable" in res.output


def test_metrics_audit_matches_manifest(tmp_path):
    cfg = write(tmp_path, SCENE.format(k=-0.3))
    assert run("generate", cfg, "--out", tmp_path / "out", "--keep-intermediate").exit_code == 0
    ds = tmp_path / "out" / "demo"
    rec = json.loads((ds / "manifest.json").read_text())["scenes"][0]
    m = rec["files"]["masks"]
    res = run(
        "metrics", ds / rec["files"]["intermediate"],
        "--visible", ds / m["c_visible"], "--full", ds / m["c_full"], "--occultant", ds / m["occultant"],
    )
    assert res.exit_code == 0, res.output
    assert json.loads(res.output) == rec["achieved_pre_sensor"]


def _target_masks(tmp_path, shape=(40, 40)):
    vis = np.zeros(shape, bool)
    vis[15:25, 15:25] = True
    save_mask(tmp_path / "vis.png", vis)
    return tmp_path / "vis.png"


def test_metrics_flat_background(tmp_path):
    img = np.full((40, 40), 100.0)
    img[15:25, 15:25] = np.tile([110.0, 120.0], 50).reshape(10, 10)
    write_irf(tmp_path / "flat.irf", img)
    res = run("metrics", tmp_path / "flat.irf", "--visible", _target_masks(tmp_path))
    assert res.exit_code == 1 and "ZeroClutter" in res.output


def test_metrics_dimension_mismatch(tmp_path):
    write_irf(tmp_path / "img.irf", np.random.default_rng(0).normal(size=(30, 40)))
    res = run("metrics", tmp_path / "img.irf", "--visible", _target_masks(tmp_path))
    assert res.exit_code == 2 and "DimensionMismatch" in res.output


EXPAND = """
[expand]
n = {n}
seed = 5
configs = [{configs}]
"""


def test_expand_lambda_override_reproduces_ta(tmp_path, bundle):
    save_bundle(tmp_path / "b", bundle)
    cfg = write(tmp_path, EXPAND.format(n=1, configs='{ default = "ambient" }'))
    res = run("expand", tmp_path / "b", cfg, tmp_path / "sig", "--lambda-override", "0")
    assert res.exit_code == 0, res.output
    out = load_image(tmp_path / "sig" / "sig_00000.png").astype(np.uint16)
    ta = load_image(tmp_path / "b" / "ta.png").astype(np.uint16)
    sil = bundle.silhouette
    assert out[sil].tobytes() == ta[sil].tobytes()


def test_expand_missing_region(tmp_path, bundle):
    save_bundle(tmp_path / "b", bundle)
    cfg = write(tmp_path, EXPAND.format(n=1, configs='{ engine = "ambient" }'))
    res = run("expand", tmp_path / "b", cfg, tmp_path / "sig")
    assert res.exit_code == 2 and "MissingRegionLambda" in res.output


def test_expand_malformed_bundle(tmp_path):
    (tmp_path / "b").mkdir()
    cfg = write(tmp_path, EXPAND.format(n=1, configs='{ default = "ambient" }'))
    assert run("expand", tmp_path / "b", cfg, tmp_path / "sig").exit_code == 2


def test_expand_statistics(tmp_path, bundle):
    save_bundle(tmp_path / "b", bundle)
    configs = '{ default = "ambient" }, { default = "intermediate" }, { default = "operating" }'
    cfg = write(tmp_path, EXPAND.format(n=100, configs=configs))
    assert run("expand", tmp_path / "b", cfg, tmp_path / "sig").exit_code == 0
    manifest = json.loads((tmp_path / "sig" / "manifest.json").read_text())
    assert len(manifest["signatures"]) == 300
    inside = []
    for entry in manifest["signatures"]:
        for region, lam in entry["lambdas"].items():
            assert 0 <= lam <= 1
            inside.append(bool(Mode(entry["modes"][region]).contains(lam)))
    assert np.mean(inside) >= 0.98


SWEEP = SCENE.format(k=0.5) + """
[sweep]
background = ["synthetic:background:1", "synthetic:background:2"]
thermal = [{ default = "ambient" }, { default = "intermediate" }, { default = "operating" }]
"constraints.rss" = [1.0, 2.5]
"""


def test_sweep_product_count(tmp_path):
    cfg = load_config(write(tmp_path, SWEEP))
    assert len(cfg.recipes) == 12
    assert len({r.seed for r in cfg.recipes}) == 12
    assert [r.scene_id for r in cfg.recipes][:2] == ["demo_00000", "demo_00001"]


def test_scene_seed_stable_under_axis_growth():
    base = {"background": "x"}
    a = dict(expand_sweep(base, {"constraints.rss": [1.0, 2.0]}).__next__()[0])
    seeds_short = [scene_seed(7, asg) for asg, _ in expand_sweep(base, {"constraints.rss": [1.0, 2.0]})]
    seeds_long = [scene_seed(7, asg) for asg, _ in expand_sweep(base, {"constraints.rss": [0.5, 1.0, 2.0]})]
    assert seeds_short == seeds_long[1:]
    assert a == {"constraints.rss": 1.0}


def test_bad_sweep_axis(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, SCENE.format(k=0.5) + '\n[sweep]\n"constraints.rs" = [1.0]\n'))


def test_seed_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("IRFORGE_SEED", "777")
    cfg = load_config(write(tmp_path, SCENE.format(k=0.5)))
    assert cfg.seed == 777


def test_parse_config_validation():
    with pytest.raises(ConfigError):
        parse_config({"version": 2, "scene": {}})
    with pytest.raises(ConfigError):
        parse_config({"dataset": {"name": "x"}})
    base = {
        "background": "synthetic:background:1",
        "bundle": "synthetic:bundle:1",
        "constraints": {"rss": 1, "scr": 1, "k": 2},
        "thermal": {"default": "ambient"},
    }
    with pytest.raises(InfeasibleK):
        parse_config({"scene": base})
    base["constraints"]["k"] = 0.1
    base["thermal"] = {"default": "lukewarm"}
    with pytest.raises(ConfigError):
        parse_config({"scene": base})
    base["thermal"] = {"default": "ambient"}
    base["bundle"] = "/no/such/bundle"
    with pytest.raises(Exception) as info:
        parse_config({"scene": base})
    assert info.value.code == "AssetError"


def test_generate_exit_one_on_scene_failure(tmp_path):
    save_raster(tmp_path / "flat.png", np.full((128, 128), 3000, np.uint16))
    text = SCENE.format(k=0.5).replace('"synthetic:background:1"', '"flat.png"')
    res = run("generate", write(tmp_path, text), "--out", tmp_path / "out")
    assert res.exit_code == 1 and "ZeroClutter" in res.output
    manifest = json.loads((tmp_path / "out" / "demo" / "manifest.json").read_text())
    assert manifest["failure_count"] == 1
