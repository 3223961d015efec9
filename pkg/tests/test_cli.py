"""End-to-end runs of every subcommand on the tiny benchmark, artifact
checks, byte-level determinism, and exit codes."""
from __future__ import annotations

import os
import subprocess

import pytest

from anyshot import cli, evaluation, nets


@pytest.fixture(scope="module")
def ran(tiny_benchmark, tmp_path_factory):
    """One full pipeline pass; tests below inspect the artifacts."""
    out = str(tmp_path_factory.mktemp("cli_run"))
    cfg = tiny_benchmark["config"]

    def run(*argv):
        code = cli.main(list(argv) + ["--config", cfg, "--out", out])
        assert code == 0, f"command {argv} exited {code}"

    run("build-sideinfo")
    run("train")
    run("evaluate")
    run("evaluate", "--binary")
    run("evaluate", "--setting", "fine_grained")
    run("finetune")
    run("evaluate", "--setting", "few_shot")
    run("evaluate", "--setting", "generalized_few_shot")
    run("prune-sweep")
    run("ablate")
    run("gradcheck")
    return {"out": out, "config": cfg}


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


class TestArtifacts:
    def test_model_and_trace(self, ran):
        out = ran["out"]
        assert os.path.exists(os.path.join(out, "model.spck"))
        assert os.path.exists(os.path.join(out, "model.spck.manifest"))
        lines = _lines(os.path.join(out, "loss_trace.tsv"))
        assert lines[0] == "epoch\t" + "\t".join(cli.TRACE_COLUMNS)
        assert len(lines) == 3  # header + 2 epochs
        assert lines[1].split("\t")[0] == "0"

    def test_sideinfo_tensors(self, ran):
        named = dict(nets.load_tensors(os.path.join(ran["out"], "sideinfo.spck")))
        assert set(named) == {"side.text", "side.hier"}
        assert named["side.text"].shape == (13, 10)
        assert named["side.hier"].shape[0] == 13

    def test_reports(self, ran):
        out = ran["out"]
        for suffix in (
            "zero_shot",
            "zero_shot_binary",
            "fine_grained",
            "few_shot",
            "generalized_few_shot",
        ):
            metrics = evaluation.read_report(
                os.path.join(out, f"report_{suffix}.tsv")
            )
            assert 0.0 <= metrics["map_at_all"] <= 1.0
            assert 0.0 <= metrics["precision_at_100"] <= 1.0
            assert os.path.exists(os.path.join(out, f"pr_curve_{suffix}.tsv"))

    def test_finetuned_checkpoint(self, ran):
        out = ran["out"]
        assert os.path.exists(os.path.join(out, "model_k2.spck"))
        trace = _lines(os.path.join(out, "finetune_trace_k2.tsv"))
        assert len(trace) == 3

    def test_prune_sweep_table(self, ran):
        lines = _lines(os.path.join(ran["out"], "prune_sweep.tsv"))
        assert lines[0] == "ratio\tkept_dims\tmap_at_all"
        rows = [l.split("\t") for l in lines[1:]]
        assert [r[0] for r in rows] == ["0", "0.5"]
        kept = [int(r[1]) for r in rows]
        assert kept[0] > kept[1] > 0
        assert all(0.0 <= float(r[2]) <= 1.0 for r in rows)

    def test_ablation_table(self, ran):
        lines = _lines(os.path.join(ran["out"], "ablation.tsv"))
        assert lines[0] == "config\tmap_at_all"
        names = [l.split("\t")[0] for l in lines[1:]]
        assert names == list(cli.ABLATIONS)

    def test_gradcheck_report(self, ran):
        lines = _lines(os.path.join(ran["out"], "gradcheck.txt"))
        assert lines
        for line in lines:
            term, err = line.split("\t")
            assert float(err) < 1e-4


class TestDeterminism:
    def test_byte_identical_reruns(self, tiny_benchmark, tmp_path, file_bytes):
        cfg = tiny_benchmark["config"]
        outs = [str(tmp_path / "a"), str(tmp_path / "b")]
        for out in outs:
            assert cli.main(["train", "--config", cfg, "--out", out]) == 0
            assert cli.main(["evaluate", "--config", cfg, "--out", out]) == 0
        for name in (
            "model.spck",
            "loss_trace.tsv",
            "report_zero_shot.tsv",
            "pr_curve_zero_shot.tsv",
        ):
            a = file_bytes(os.path.join(outs[0], name))
            b = file_bytes(os.path.join(outs[1], name))
            assert a == b, f"{name} differs between identical runs"

    def test_evaluate_reuses_checkpoint(self, ran):
        path = os.path.join(ran["out"], "model.spck")
        before = os.path.getmtime(path)
        code = cli.main(
            ["evaluate", "--config", ran["config"], "--out", ran["out"]]
        )
        assert code == 0
        assert os.path.getmtime(path) == before


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path):
        missing = str(tmp_path / "nope.cfg")
        assert cli.main(["train", "--config", missing, "--out", str(tmp_path)]) == 2

    def test_unknown_key_is_2(self, tiny_benchmark, tmp_path):
        cfg = tmp_path / "bad.cfg"
        with open(tiny_benchmark["config"], encoding="utf-8") as fh:
            cfg.write_text(fh.read() + "train.owner = me\n", encoding="utf-8")
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 2

    def test_unknown_setting_flag_is_1(self, ran):
        # The --setting flag bypasses config validation and fails at
        # gallery construction, which is a runtime error, not a config one.
        code = cli.main(
            [
                "evaluate",
                "--config",
                ran["config"],
                "--out",
                ran["out"],
                "--setting",
                "open_world",
            ]
        )
        assert code == 1


    def test_corrupt_features_is_1(self, tiny_benchmark, tmp_path):
        cfg = tmp_path / "swap.cfg"
        lines = []
        with open(tiny_benchmark["config"], encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("data.sketches"):
                    line = f"data.sketches = {tiny_benchmark['taxonomy']}\n"
                lines.append(line)
        cfg.write_text("".join(lines), encoding="utf-8")
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_console_script_runs():
    proc = subprocess.run(
        ["anyshot", "--help"], capture_output=True, text=True, timeout=60
    )
    assert proc.returncode == 0
    assert "subcommand" in proc.stdout or "usage" in proc.stdout
