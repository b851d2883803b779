import json

import pytest

from otenhance.cli import main
from otenhance.evaluation import EvalReport
from otenhance.pairing import load_manifest


MISUSE_CASES = [
    [],                                                   # no arguments
    ["transmogrify"],                                     # unknown subcommand
    ["synth"],                                            # missing required --out
    ["synth", "--out", "d", "--seed", "not-a-number"],    # bad option value
    ["train", "--out", "d"],                              # missing --manifest
    ["enhance", "--in", "a", "--out", "b"],               # missing --checkpoint
    ["eval-nr", "--enhanced", "d"],                       # no classifier source
    ["eval-fr", "--pairs", "p"],                          # missing --corpus/--enhanced
    ["report"],                                           # missing --in
    ["synth", "--out", "d", "--config", "/nonexistent.json"],  # unreadable config
]


class TestUsageErrors:
    @pytest.mark.parametrize("argv", MISUSE_CASES, ids=lambda a: " ".join(a) or "(empty)")
    def test_misuse_exits_one_with_synopsis(self, argv, capsys):
        assert main(argv) == 1
        err = capsys.readouterr().err
        assert "usage:" in err
        assert "error:" in err

    def test_unknown_config_key_is_a_usage_error(self, tmp_path, capsys):
        config = tmp_path / "c.json"
        config.write_text(json.dumps({"synth": {"wavelength": 320}}))
        assert main(["synth", "--out", str(tmp_path / "c"), "--config", str(config)]) == 1

    def test_invalid_json_config(self, tmp_path, capsys):
        config = tmp_path / "c.json"
        config.write_text("{not json")
        assert main(["synth", "--out", str(tmp_path / "c"), "--config", str(config)]) == 1


class TestRuntimeErrors:
    def test_missing_manifest_exits_two(self, tmp_path, capsys):
        code = main(["train", "--manifest", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "run")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_checkpoint_exits_two(self, tmp_path, capsys):
        (tmp_path / "in").mkdir()
        code = main(["enhance", "--checkpoint", str(tmp_path / "nope.pt"),
                     "--in", str(tmp_path / "in"), "--out", str(tmp_path / "out")])
        assert code == 2

    def test_degrade_empty_directory_exits_two(self, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        code = main(["degrade", "--in", str(tmp_path / "empty"),
                     "--out", str(tmp_path / "out")])
        assert code == 2


class TestHappyPaths:
    def test_synth_writes_manifest(self, tmp_path, capsys):
        out = tmp_path / "corpus"
        assert main(["synth", "--out", str(out), "--n-per-grade", "1",
                     "--config", str(self.write_config(tmp_path)), "--seed", "4"]) == 0
        manifest = out / "manifest.csv"
        assert manifest.is_file()
        assert len(load_manifest(manifest)) == 10

    @staticmethod
    def write_config(tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"synth": {"side": 32}, "degradation": {"blur_sigma": 1.0}}))
        return path

    def test_degrade_processes_directory(self, tmp_path, capsys):
        out = tmp_path / "corpus"
        main(["synth", "--out", str(out), "--n-per-grade", "1",
              "--config", str(self.write_config(tmp_path))])
        assert main(["degrade", "--in", str(out / "good"),
                     "--out", str(tmp_path / "degraded"), "--seed", "1"]) == 0
        assert len(list((tmp_path / "degraded").glob("*.png"))) == 5

    def test_eval_fr_report_round_trip(self, tmp_path, capsys):
        out = tmp_path / "corpus"
        main(["synth", "--out", str(out), "--n-per-grade", "1",
              "--config", str(self.write_config(tmp_path))])
        report_path = tmp_path / "report.json"
        # Degraded images stand in as their own "enhancements": the report
        # must exactly reproduce the baseline row.
        assert main(["eval-fr", "--pairs", str(out / "pairs.csv"), "--corpus", str(out),
                     "--enhanced", str(out / "reject"), "--out", str(report_path)]) == 0
        report = EvalReport.from_json(report_path)
        assert report.mean_psnr == report.mean_psnr_baseline

        csv_path = tmp_path / "rows.csv"
        assert main(["report", "--in", str(report_path), "--csv", str(csv_path)]) == 0
        assert csv_path.read_text().startswith("id,psnr_baseline")
        table = capsys.readouterr().out
        assert "enhanced" in table

    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["--help"])
        assert excinfo.value.code == 0

    def test_scripted_pipeline_end_to_end(self, tmp_path, capsys):
        corpus = tmp_path / "corpus"
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({
            "synth": {"side": 32},
            "train": {
                "epochs": 1, "batch_size": 2, "image_side": 32,
                "checkpoint_every": 1,
                "objective": {"critic_steps": 1},
                "generator": {"base_channels": 8, "depth": 2, "residual_blocks": 1},
                "critic": {"base_channels": 8, "conv_layers": 2},
            },
        }))
        assert main(["synth", "--out", str(corpus), "--n-per-grade", "2",
                     "--config", str(config), "--seed", "9"]) == 0
        assert main(["train", "--manifest", str(corpus / "manifest.csv"),
                     "--out", str(tmp_path / "run"), "--config", str(config),
                     "--seed", "9"]) == 0
        checkpoint = capsys.readouterr().out.strip().splitlines()[-1]
        assert main(["enhance", "--checkpoint", checkpoint,
                     "--in", str(corpus / "reject"),
                     "--out", str(tmp_path / "enhanced")]) == 0
        report_json = tmp_path / "report.json"
        assert main(["eval-fr", "--pairs", str(corpus / "pairs.csv"),
                     "--corpus", str(corpus), "--enhanced", str(tmp_path / "enhanced"),
                     "--out", str(report_json)]) == 0
        csv_path = tmp_path / "rows.csv"
        assert main(["report", "--in", str(report_json), "--csv", str(csv_path)]) == 0
        table = capsys.readouterr().out
        assert "Full-reference evaluation" in table
        assert len(csv_path.read_text().strip().splitlines()) == 11  # header + 10 pairs
