"""CLI tests: run/verify flows, exit codes, artifact determinism."""

import json
from pathlib import Path

import numpy as np
import pytest

from tileshift.cli import EXIT_BACKEND, EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_VERIFY, main
from tileshift.grids import Tiling, untile
from tileshift.imageio import load_png, quantize, save_png
from tileshift.transforms import TilePermutation, apply


@pytest.fixture()
def beta_png(tmp_path):
    rng = np.random.default_rng(0)
    tiles = rng.random((16, 4, 4, 3)).astype(np.float32)
    beta = untile(tiles, Tiling(4, 4, 4))
    path = tmp_path / "beta.png"
    save_png(path, beta)
    return path


@pytest.fixture()
def target_png(tmp_path, beta_png):
    beta = load_png(beta_png)
    tiling = Tiling.for_image(16, 16, 4)
    mapping = np.random.default_rng(1).permutation(16)
    target = apply(TilePermutation(tiling=tiling, mapping=mapping), beta)
    path = tmp_path / "target.png"
    save_png(path, target)
    return path, mapping


def run_cli(*argv):
    return main(list(argv))


def test_fixed_run_verify_and_determinism(tmp_path, beta_png, target_png):
    target_path, mapping = target_png
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    for out in (out1, out2):
        code = run_cli(
            "run", "--mode", "fixed_pixel", "--source", str(beta_png),
            "--prompt", "a dog", "--tiles", "4",
            "--backend", f"mock:target={target_path}", "--seed", "7",
            "--out", str(out),
        )
        assert code == EXIT_OK
    # byte-identical rerun: images and manifest
    for name in ("output_00.png", "manifest.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    # the emitted image is the recovered arrangement of beta's tiles
    got = quantize(load_png(out1 / "output_00.png"))
    beta_q = quantize(load_png(beta_png))
    tiling = Tiling.for_image(16, 16, 4)
    t = TilePermutation(tiling=tiling, mapping=mapping)
    assert np.array_equal(got, apply(t, beta_q.astype(np.float32)).astype(np.uint8))
    assert run_cli("verify", str(out1)) == EXIT_OK


def test_free_run_outputs_are_tile_permutations(tmp_path):
    out = tmp_path / "free"
    code = run_cli(
        "run", "--mode", "free_pixel", "--prompt", "A", "--prompt", "B",
        "--tiles", "4", "--image-size", "16", "16",
        "--backend", "mock:strength=0.6", "--seed", "3", "--out", str(out),
        "--emit-contact-sheet",
    )
    assert code == EXIT_OK
    m = json.loads((out / "manifest.json").read_text())
    a = quantize(load_png(out / "output_00.png"))
    b = quantize(load_png(out / "output_01.png"))
    from tileshift.manifest import transform_from_dict

    t = transform_from_dict(m["transforms"][1])
    assert np.array_equal(apply(t, a.astype(np.float32)).astype(np.uint8), b)
    assert (out / "contact_sheet.png").is_file()
    assert (out / "output_01_inverse.png").is_file()
    assert run_cli("verify", str(out)) == EXIT_OK


def test_invalid_tiling_is_config_error(tmp_path):
    src = tmp_path / "src.png"
    save_png(src, np.random.default_rng(2).random((100, 100, 3)).astype(np.float32))
    code = run_cli(
        "run", "--mode", "fixed_pixel", "--source", str(src), "--prompt", "x",
        "--tiles", "16", "--out", str(tmp_path / "o"),
    )
    assert code == EXIT_CONFIG


def test_missing_source_is_io_error(tmp_path):
    code = run_cli(
        "run", "--mode", "fixed_pixel", "--source", str(tmp_path / "nope.png"),
        "--prompt", "x", "--out", str(tmp_path / "o"),
    )
    assert code == EXIT_IO


def test_unreachable_backend_is_backend_error(tmp_path, beta_png):
    code = run_cli(
        "run", "--mode", "fixed_pixel", "--source", str(beta_png), "--prompt", "x",
        "--tiles", "4", "--backend", "http://127.0.0.1:1", "--out", str(tmp_path / "o"),
    )
    assert code == EXIT_BACKEND


def test_missing_mode_or_prompt_is_config_error(tmp_path):
    assert run_cli("run", "--out", str(tmp_path / "o")) == EXIT_CONFIG


def test_verify_detects_tampering(tmp_path, beta_png, target_png):
    target_path, _ = target_png
    out = tmp_path / "o"
    run_cli(
        "run", "--mode", "fixed_pixel", "--source", str(beta_png), "--prompt", "d",
        "--tiles", "4", "--backend", f"mock:target={target_path}", "--seed", "1",
        "--out", str(out),
    )
    img_path = out / "output_00.png"
    img = quantize(load_png(img_path))
    img[0, 0, 0] = (int(img[0, 0, 0]) + 1) % 256  # flip one pixel
    save_png(img_path, img)
    assert run_cli("verify", str(out)) == EXIT_VERIFY


def test_verify_missing_manifest_is_io_error(tmp_path):
    assert run_cli("verify", str(tmp_path)) == EXIT_IO


def test_config_file_with_flag_override(tmp_path, beta_png, target_png):
    target_path, _ = target_png
    cfg_file = tmp_path / "run.json"
    cfg_file.write_text(
        json.dumps(
            {
                "mode": "fixed_pixel",
                "prompt": ["a dog"],
                "source": [str(beta_png)],
                "tiles": 4,
                "backend": f"mock:target={target_path}",
                "seed": 7,
            }
        )
    )
    out_a = tmp_path / "oa"
    assert run_cli("run", "--config", str(cfg_file), "--out", str(out_a)) == EXIT_OK
    # flags override the file: different seed changes nothing here (converged),
    # but the manifest must record the overridden value
    out_b = tmp_path / "ob"
    assert (
        run_cli("run", "--config", str(cfg_file), "--seed", "12", "--out", str(out_b))
        == EXIT_OK
    )
    mb = json.loads((out_b / "manifest.json").read_text())
    assert mb["config"]["seed"] == 12


def test_latent_mode_cli(tmp_path, beta_png):
    out = tmp_path / "lat"
    code = run_cli(
        "run", "--mode", "fixed_latent", "--source", str(beta_png), "--prompt", "p",
        "--tiles", "4", "--backend", "mock:scale=2", "--seed", "2",
        "--mainline-steps", "4", "--rollout-steps", "20", "--out", str(out),
    )
    assert code == EXIT_OK
    assert run_cli("verify", str(out)) == EXIT_OK
