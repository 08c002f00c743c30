import numpy as np

from multicount.cli import main


def _write_cfg(path, out_dir, extra=""):
    path.write_text(
        "model.width_multiplier = 0.125\n"
        "model.init_std = 0.05\n"
        "scene.height = 64\n"
        "scene.width = 64\n"
        "scene.count_min = 2, 1\n"
        "scene.count_max = 4, 2\n"
        "scene.radius_min = 2.0, 5.0\n"
        "scene.radius_max = 3.5, 8.0\n"
        "scene.seed = 3\n"
        "train.train_scenes = 2\n"
        "train.steps = 1\n"
        "train.batch_size = 1\n"
        "train.crop = 64\n"
        "train.learning_rate = 0.002\n"
        f"train.out_dir = {out_dir}\n"
        + extra
    )
    return path


class TestCli:
    def test_train_then_eval_then_export(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path / "run.cfg", tmp_path / "run")
        assert main(["train", "--config", str(cfg)]) == 0
        checkpoint = tmp_path / "run" / "checkpoint.ckpt"
        assert checkpoint.exists()

        assert main(["synth", "--config", str(cfg),
                     "--out", str(tmp_path / "ds")]) == 0
        manifest = tmp_path / "ds" / "manifest.txt"
        assert manifest.exists()

        assert main(["eval", "--checkpoint", str(checkpoint),
                     "--manifest", str(manifest),
                     "--out", str(tmp_path / "metrics.txt")]) == 0
        out = capsys.readouterr().out
        assert "mae_mean = " in out
        assert (tmp_path / "metrics.txt").exists()

        image = tmp_path / "ds" / "images" / "scene_0000.ppm"
        assert main(["export", "--checkpoint", str(checkpoint),
                     "--image", str(image),
                     "--out", str(tmp_path / "export")]) == 0
        assert (tmp_path / "export" / "summary.txt").exists()

    def test_missing_config_gives_io_category(self, tmp_path, capsys):
        code = main(["train", "--config", str(tmp_path / "nope.cfg")])
        assert code == 6
        err = capsys.readouterr().err
        assert err.startswith("error: io:")

    def test_bad_config_gives_config_category(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("model.bogus = 1\n")
        code = main(["train", "--config", str(cfg)])
        assert code == 2
        assert capsys.readouterr().err.startswith("error: config:")

    def test_bad_checkpoint_gives_checkpoint_category(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path / "run.cfg", tmp_path / "run")
        assert main(["synth", "--config", str(cfg),
                     "--out", str(tmp_path / "ds")]) == 0
        capsys.readouterr()
        bogus = tmp_path / "bogus.ckpt"
        bogus.write_bytes(b"\x00\x01 not a checkpoint\n")
        code = main(["eval", "--checkpoint", str(bogus),
                     "--manifest", str(tmp_path / "ds" / "manifest.txt")])
        assert code == 4
        assert capsys.readouterr().err.startswith("error: checkpoint:")

    def test_out_root_env_redirects_relative_out(self, tmp_path, capsys,
                                                 monkeypatch):
        monkeypatch.setenv("MULTICOUNT_OUT_ROOT", str(tmp_path / "root"))
        cfg = _write_cfg(tmp_path / "run.cfg", "nested/run")
        assert main(["train", "--config", str(cfg)]) == 0
        assert (tmp_path / "root" / "nested" / "run"
                / "checkpoint.ckpt").exists()
