import json
import subprocess
import sys

import numpy as np
import pytest
from click.testing import CliRunner

from gridvid.cli import cli
from gridvid.gridio import read_feature_grid
from tests.conftest import small_scene


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = small_scene(frames=4, n=32, texture=0.3)
    spec_path = root / "scene.json"
    spec_path.write_text(json.dumps(spec.to_json()))
    out = root / "scene"
    result = CliRunner().invoke(cli, ["synth", "--spec", str(spec_path), "--out", str(out)])
    assert result.exit_code == 0, result.output
    return root, out


@pytest.fixture(scope="module")
def encoded(scene_dir):
    root, scene = scene_dir
    stream = root / "stream.rrfv"
    result = CliRunner().invoke(cli, [
        "encode", "--grids", str(scene), "--motions", str(scene),
        "--sq", "1e-3", "--gof", "4", "--out", str(stream),
    ])
    assert result.exit_code == 0, result.output
    return root, scene, stream


def test_synth_outputs(scene_dir):
    _, out = scene_dir
    assert len(list(out.glob("*.rrfg"))) == 4
    assert len(list(out.glob("*.rrfm"))) == 3
    assert (out / "scene.json").is_file()


def test_encode_decode_psnr_round_trip(encoded, runner, tmp_path):
    root, scene, stream = encoded
    decoded = tmp_path / "f0.rrfg"
    result = runner.invoke(cli, ["decode", "--in", str(stream), "--frame", "0",
                                 "--out", str(decoded)])
    assert result.exit_code == 0, result.output
    result = runner.invoke(cli, ["psnr", "--ref", str(scene / "frame_0000.rrfg"),
                                 "--test", str(decoded)])
    assert result.exit_code == 0, result.output
    assert float(result.output.strip()) >= 60.0


def test_psnr_self_is_inf(encoded, runner):
    _, scene, _ = encoded
    frame = str(scene / "frame_0000.rrfg")
    result = runner.invoke(cli, ["psnr", "--ref", frame, "--test", frame])
    assert result.exit_code == 0
    assert result.output.strip() == "inf"


def test_info_reports_gofs(runner, tmp_path):
    spec = small_scene(frames=40, n=16, radius_vox=4.0, velocity_vox=0.25)
    scene_json = tmp_path / "s.json"
    scene_json.write_text(json.dumps(spec.to_json()))
    scene_out = tmp_path / "scene"
    assert runner.invoke(cli, ["synth", "--spec", str(scene_json), "--out", str(scene_out)]).exit_code == 0
    stream = tmp_path / "s.rrfv"
    assert runner.invoke(cli, [
        "encode", "--grids", str(scene_out), "--motions", str(scene_out),
        "--sq", "1.0", "--gof", "20", "--out", str(stream),
    ]).exit_code == 0
    result = runner.invoke(cli, ["info", "--in", str(stream)])
    assert result.exit_code == 0, result.output
    assert "(2 GOFs)" in result.output
    assert "GOF length 20" in result.output


def test_encode_ladder_writes_manifest(runner, scene_dir, tmp_path):
    _, scene = scene_dir
    out_dir = tmp_path / "ladder"
    result = runner.invoke(cli, [
        "encode", "--grids", str(scene), "--motions", str(scene),
        "--sq", "0.1", "--sq", "4.0", "--gof", "4", "--out", str(out_dir),
    ])
    assert result.exit_code == 0, result.output
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert len(manifest["qualities"]) == 2
    assert (out_dir / "report.json").is_file()
    for level in manifest["qualities"]:
        assert (out_dir / level["path"]).is_file()


def test_render_writes_png(runner, encoded, tmp_path):
    root, scene, stream = encoded
    decoded = tmp_path / "f1.rrfg"
    assert runner.invoke(cli, ["decode", "--in", str(stream), "--frame", "1",
                               "--out", str(decoded)]).exit_code == 0
    cam = tmp_path / "cam.json"
    cam.write_text(json.dumps({
        "position": [0.5, 0.6, 2.5], "target": [0.5, 0.5, 0.5],
        "fov_deg": 40, "width": 32, "height": 24, "near": 1.3, "far": 3.3,
    }))
    png = tmp_path / "img.png"
    result = runner.invoke(cli, ["render", "--grid", str(decoded), "--camera", str(cam),
                                 "--out", str(png), "--samples", "64",
                                 "--raw-out", str(tmp_path / "img.raw")])
    assert result.exit_code == 0, result.output
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert (tmp_path / "img.raw").stat().st_size == 8 + 32 * 24 * 3 * 4


def test_decoded_grid_readable(encoded, tmp_path, runner):
    _, scene, stream = encoded
    out = tmp_path / "f2.rrfg"
    assert runner.invoke(cli, ["decode", "--in", str(stream), "--frame", "2",
                               "--out", str(out)]).exit_code == 0
    grid = read_feature_grid(out)
    ref = read_feature_grid(scene / "frame_0002.rrfg")
    assert grid.dims == ref.dims
    assert np.abs(grid.data - ref.data).max() < 0.05


class TestExitCodes:
    def run(self, *args):
        return subprocess.run(
            [sys.executable, "-m", "gridvid", *args],
            capture_output=True, text=True, cwd="/root/pkg",
        )

    def test_usage_error_is_1(self):
        proc = self.run("decode", "--frame", "0")
        assert proc.returncode == 1
        assert "usage error" in proc.stderr

    def test_unknown_command_is_1(self):
        proc = self.run("transmogrify")
        assert proc.returncode == 1

    def test_data_error_is_2(self, tmp_path):
        bad = tmp_path / "bad.rrfv"
        bad.write_bytes(b"not a stream at all")
        proc = self.run("info", "--in", str(bad))
        assert proc.returncode == 2
        assert proc.stderr.strip().startswith("error:")

    def test_success_is_0(self):
        proc = self.run("--help")
        assert proc.returncode == 0
