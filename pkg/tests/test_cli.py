import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from srtvit.cli import main
from srtvit.fields import read_srtf
from srtvit.ppm import read_ppm, write_ppm
from srtvit.synthetic import constant_image, random_image, step_edge_image
from srtvit.weights import make_toy_weights, read_container, save_container

from conftest import TOY

GOLDEN = Path(__file__).parent / "golden" / "visualize_toy_d2.sha256"


@pytest.fixture(scope="module")
def assets(tmp_path_factory):
    root = tmp_path_factory.mktemp("assets")
    save_container(make_toy_weights(0, TOY), root / "toy.vitw")
    write_ppm(random_image(7, 64, 64), root / "img.ppm")
    write_ppm(step_edge_image(64, 64, 35), root / "edge.ppm")
    write_ppm(constant_image(64, 64, 0.5), root / "flat.ppm")
    return root


def run(*argv):
    return main([str(a) for a in argv])


def sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def test_enhance_d0_records_equal_checksums(assets, tmp_path):
    assert run("enhance", "--weights", assets / "toy.vitw", "--image", assets / "img.ppm", "--d", 0, "--out", tmp_path) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["passes"] == 1
    assert m["naive_efficient_equal"] is True
    assert m["checksums"]["tokens_naive"] == m["checksums"]["tokens_efficient"]
    assert m["checksums"]["field.srtf"] == sha(tmp_path / "field.srtf")
    assert read_srtf(tmp_path / "tokens.srtf").data.shape == (8, 8, 32)


def test_enhance_d3_records_49_passes(assets, tmp_path):
    assert run("enhance", "--weights", assets / "toy.vitw", "--image", assets / "img.ppm", "--d", 3, "--layer", 1, "--out", tmp_path) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["passes"] == 49 and len(m["shifts"]) == 49
    assert m["naive_efficient_max_abs_dev"] <= 1e-5
    assert read_srtf(tmp_path / "field.srtf").data.shape == (64, 64, 32)


def test_enhance_is_deterministic(assets, tmp_path):
    for sub in ("a", "b"):
        assert run("enhance", "--weights", assets / "toy.vitw", "--image", assets / "img.ppm", "--d", 1, "--out", tmp_path / sub) == 0
    for name in ("field.srtf", "tokens.srtf"):
        assert sha(tmp_path / "a" / name) == sha(tmp_path / "b" / name)


def test_invalid_layer_is_usage_error(assets, tmp_path, capsys):
    code = run("enhance", "--weights", assets / "toy.vitw", "--image", assets / "img.ppm", "--layer", 5, "--out", tmp_path)
    assert code == 2
    assert "0..2" in capsys.readouterr().err


def test_bad_flag_and_missing_inputs(assets, tmp_path):
    assert run("enhance", "--bogus") == 2
    assert run("enhance", "--image", assets / "img.ppm", "--out", tmp_path) == 2
    assert run("enhance", "--weights", tmp_path / "missing.vitw", "--image", assets / "img.ppm", "--out", tmp_path) == 1
    assert run("enhance", "--weights", assets / "toy.vitw", "--image", assets / "img.ppm", "--d", 5, "--out", tmp_path) == 1


def test_shift_bound_override(assets, tmp_path):
    args = ["enhance", "--weights", assets / "toy.vitw", "--image", assets / "img.ppm", "--d", 5, "--out", tmp_path]
    assert run(*args, "--override-shift-bound") == 0


def test_median_with_efficient_path_warns(assets, tmp_path):
    with pytest.warns(UserWarning):
        code = run("enhance", "--weights", assets / "toy.vitw", "--image", assets / "img.ppm", "--d", 1, "--stat", "median", "--out", tmp_path)
    assert code == 0


def test_config_file_supplies_defaults(assets, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"weights": str(assets / "toy.vitw"), "image": str(assets / "img.ppm"), "d": 2, "layer": 0}))
    assert run("enhance", "--config", cfg, "--out", tmp_path / "o") == 0
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["passes"] == 25 and m["config"]["layer"] == 0
    # Explicit flags win.
    assert run("enhance", "--config", cfg, "--d", 1, "--out", tmp_path / "p") == 0
    assert json.loads((tmp_path / "p" / "manifest.json").read_text())["passes"] == 9
    (tmp_path / "bad.json").write_text("{")
    assert run("enhance", "--config", tmp_path / "bad.json") == 2


def test_visualize_golden(assets, tmp_path):
    hashes = []
    for sub in ("a", "b"):
        assert run("visualize", "--weights", assets / "toy.vitw", "--image", assets / "img.ppm", "--d", 2, "--out", tmp_path / sub) == 0
        hashes.append(sha(tmp_path / sub / "pca.ppm"))
    assert hashes[0] == hashes[1]
    img = read_ppm(tmp_path / "a" / "pca.ppm")
    assert img.shape == (64, 64, 3)
    assert GOLDEN.read_text().split()[0] == hashes[0]


def test_visualize_constant_image_reports_degenerate(assets, tmp_path, capsys):
    # Positional embeddings alone would give a constant image full rank, so zero them.
    c = make_toy_weights(0, TOY)
    c.tensors["pos_embed"] = np.zeros_like(c.tensors["pos_embed"])
    save_container(c, tmp_path / "nopos.vitw")
    code = run("visualize", "--weights", tmp_path / "nopos.vitw", "--image", assets / "flat.ppm", "--layer", 0, "--d", 0, "--out", tmp_path)
    assert code == 1
    assert "degenerate" in capsys.readouterr().err.lower()


def test_visualize_d7_patch16_within_bound(tmp_path):
    from srtvit.vit import ViTConfig

    cfg = ViTConfig(32, 32, 16, 16, 8, 1, 2)
    save_container(make_toy_weights(3, cfg), tmp_path / "p16.vitw")
    write_ppm(random_image(1, 32, 32), tmp_path / "img.ppm")
    code = run("visualize", "--weights", tmp_path / "p16.vitw", "--image", tmp_path / "img.ppm", "--d", 7, "--samples", 12, "--out", tmp_path / "o")
    assert code == 0


def test_noise_map_outputs(assets, tmp_path):
    assert run("noise-map", "--weights", assets / "toy.vitw", "--image", assets / "edge.ppm", "--d", 2, "--out", tmp_path) == 0
    lines = (tmp_path / "noise_hist.csv").read_text().splitlines()
    assert lines[0] == "bin_lo,bin_hi,count"
    assert sum(int(l.split(",")[2]) for l in lines[1:]) == 64 * 64
    assert (tmp_path / "noise.pgm").read_bytes().startswith(b"P5\n64 64\n255\n")


def test_noise_map_d0_is_zero(assets, tmp_path):
    assert run("noise-map", "--weights", assets / "toy.vitw", "--image", assets / "img.ppm", "--d", 0, "--out", tmp_path) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["mean_noise"] == 0.0


def test_sr1d(tmp_path, capsys):
    assert run("sr1d", "--out", tmp_path) == 0
    out = dict(l.split("=") for l in capsys.readouterr().out.split())
    assert float(out["mse_dithered"]) <= 0.15 * float(out["mse_plain"])
    first = (tmp_path / "sr1d.csv").read_bytes()
    assert run("sr1d", "--out", tmp_path) == 0
    assert (tmp_path / "sr1d.csv").read_bytes() == first


def test_sr1d_level_aligned_signal(tmp_path, capsys):
    assert run("sr1d", "--n", 5, "--ramp-step", 1.0, "--dither", "none", "--out", tmp_path) == 0
    assert "mse_plain=0.0" in capsys.readouterr().out


def test_make_toy_and_inspect(tmp_path, capsys):
    assert run("make-toy", "--seed", 0, "--out", tmp_path / "a.vitw") == 0
    printed = capsys.readouterr().out
    assert f"sha256={sha(tmp_path / 'a.vitw')}" in printed
    assert run("make-toy", "--seed", 0, "--out", tmp_path / "b.vitw") == 0
    assert sha(tmp_path / "a.vitw") == sha(tmp_path / "b.vitw")
    assert read_container(tmp_path / "a.vitw").config == TOY
    assert run("inspect-weights", "--weights", tmp_path / "a.vitw") == 0
    assert "blocks.0.attn.qkv.weight" in capsys.readouterr().out
    assert run("make-toy", "--heads", 5, "--out", tmp_path / "c.vitw") == 1


@pytest.mark.slow
def test_bench_command(assets, tmp_path):
    code = run("bench", "--weights", assets / "toy.vitw", "--levels", "1", "--repeat", 1, "--jobs", 2, "--out", tmp_path)
    assert code == 0
    header = (tmp_path / "bench.csv").read_text().splitlines()[0]
    assert header == "d,passes,path,jobs,wall_s,peak_bytes"
