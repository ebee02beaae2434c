import subprocess
import sys

import numpy as np
import pytest

from conftest import TINY
from raycal.cli import main
from raycal.config import TrainConfig, format_config, parse_config
from raycal.errors import ConfigurationError
from raycal.evaluation import AGGREGATE_FIELDS


def _config_text(**extra):
    cfg = dict(TINY, epochs=2, e1=1, e2=2, batch_size=4, rays_per_step=64, w_photometric=1.0)
    cfg.update(extra)
    return "".join(f"{k} = {' '.join(map(str, v)) if isinstance(v, tuple) else v}\n" for k, v in cfg.items())


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["sim", "--out", str(root / "d0"), "--seed", "7", "--frames", "6",
                 "--width", "16", "--height", "16"]) == 0
    (root / "c.txt").write_text("# tiny run\n" + _config_text())
    assert main(["train", "--dataset", str(root / "d0"), "--config", str(root / "c.txt"),
                 "--out", str(root / "run")]) == 0
    return root


# config files -------------------------------------------------------------------

def test_config_parse_and_round_trip():
    cfg = parse_config("e1 = 3  # comment\n\nencoder_channels = 4, 8\nencoder_strides = 2 1\nphotometric = no\nseed=9\n")
    assert (cfg.e1, cfg.encoder_channels, cfg.photometric, cfg.seed) == (3, (4, 8), False, 9)
    assert parse_config(format_config(cfg)) == cfg
    assert parse_config(format_config(TrainConfig())) == TrainConfig()


@pytest.mark.parametrize("text", ["nope = 1\n", "e1 3\n", "e1 = three\n", "photometric = maybe\n"])
def test_config_errors(text):
    with pytest.raises(ConfigurationError, match="line 1|bad value"):
        parse_config(text)


# commands -----------------------------------------------------------------------

def test_sim_is_byte_deterministic(workspace, tmp_path):
    args = ["sim", "--seed", "7", "--frames", "6", "--width", "16", "--height", "16", "--out"]
    assert main(args + [str(tmp_path / "again")]) == 0
    files = sorted(f.relative_to(workspace / "d0") for f in (workspace / "d0").rglob("*") if f.is_file())
    assert len(files) > 6
    for f in files:
        assert (workspace / "d0" / f).read_bytes() == (tmp_path / "again" / f).read_bytes(), f


def test_train_then_eval_odom(workspace, tmp_path, capsys):
    assert (workspace / "run" / "final.ckpt").exists()
    assert len((workspace / "run" / "history.tsv").read_text().splitlines()) == 1 + 2 * 2
    capsys.readouterr()
    assert main(["eval-odom", "--dataset", str(workspace / "d0"), "--checkpoint",
                 str(workspace / "run" / "final.ckpt"), "--out", str(tmp_path)]) == 0
    head, vals = (tmp_path / "odometry.tsv").read_text().splitlines()
    assert tuple(head.split("\t")) == AGGREGATE_FIELDS
    assert len(vals.split("\t")) == 6 and all(np.isfinite(float(v)) for v in vals.split("\t"))
    assert "median |t_pred|/|t_gt|" in capsys.readouterr().out
    assert len((tmp_path / "odometry_pairs.tsv").read_text().splitlines()) == 6


def test_eval_calib_and_render(workspace, tmp_path):
    ckpt = str(workspace / "run" / "final.ckpt")
    assert main(["eval-calib", "--checkpoint", ckpt, "--dataset", str(workspace / "d0"),
                 "--out", str(tmp_path / "cal")]) == 0
    head, vals = (tmp_path / "cal" / "calibration.tsv").read_text().splitlines()
    assert head == "f\tcx\tcy\tdelta_r" and float(vals.split("\t")[3]) >= 0.0
    assert (tmp_path / "cal" / "distortion_grid.txt").exists()
    assert main(["render", "--checkpoint", ckpt, "--dataset", str(workspace / "d0"),
                 "--views", "3", "--out", str(tmp_path / "r")]) == 0
    names = sorted(p.name for p in (tmp_path / "r").iterdir())
    assert names == ["diff_00.ppm", "diff_01.ppm", "view_00.ppm", "view_01.ppm", "view_02.ppm"]


def test_outputs_are_deterministic(workspace, tmp_path):
    ckpt = str(workspace / "run" / "final.ckpt")
    for name in ("a", "b"):
        assert main(["eval-odom", "--dataset", str(workspace / "d0"), "--checkpoint", ckpt,
                     "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "odometry_pairs.tsv").read_bytes() == (tmp_path / "b" / "odometry_pairs.tsv").read_bytes()


def test_gradcheck_passes(capsys):
    assert main(["gradcheck"]) == 0
    last = capsys.readouterr().out.strip().splitlines()[-1]
    assert last.startswith("max relative deviation:")
    assert float(last.split()[3]) < 1e-4


# exit codes ---------------------------------------------------------------------

@pytest.mark.parametrize("argv", [[], ["bogus"], ["sim", "--frobnicate"], ["train"],
                                  ["eval-odom", "--dataset", "x"], ["sim", "--seed", "abc"]])
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == 1
    assert "usage error" in capsys.readouterr().err


def test_validation_errors_exit_one(workspace, tmp_path):
    (tmp_path / "bad.txt").write_text("no_such_key = 1\n")
    assert main(["train", "--dataset", str(workspace / "d0"), "--config", str(tmp_path / "bad.txt")]) == 1
    assert main(["train", "--dataset", str(tmp_path / "missing")]) == 1
    (tmp_path / "junk.ckpt").write_bytes(b"not a checkpoint")
    assert main(["eval-calib", "--checkpoint", str(tmp_path / "junk.ckpt"), "--out", str(tmp_path)]) == 1
    assert main(["render", "--checkpoint", str(workspace / "run" / "final.ckpt"), "--dataset",
                 str(workspace / "d0"), "--pair", "9", "--out", str(tmp_path)]) == 1


def test_runtime_failure_exits_two(workspace, tmp_path, capsys):
    # a NaN pixel in the float sidecar makes the loss non-finite mid-run
    d = tmp_path / "nan"
    assert main(["sim", "--out", str(d), "--seed", "7", "--frames", "6", "--width", "16", "--height", "16"]) == 0
    side = sorted(d.rglob("*.f32"))[2]
    raw = np.fromfile(side, dtype="<f4")
    raw[40] = np.nan
    raw.tofile(side)
    assert main(["train", "--dataset", str(d), "--config", str(workspace / "c.txt"), "--out", str(tmp_path / "r")]) == 2
    assert "non-finite" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "raycal", "gradcheck", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0 and (tmp_path / "gradcheck.tsv").exists()
    bad = subprocess.run([sys.executable, "-m", "raycal", "sim", "--nope"], capture_output=True, text=True)
    assert bad.returncode == 1
