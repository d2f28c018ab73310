import json
import os

import pytest
from click.testing import CliRunner

from molevo.cli import main
from molevo.metrics import topk_auc
from molevo.records import RunRecord

SMALL = ["--override", "n_c=20", "--override", "num_crossovers=12",
         "--override", "n_o=12", "--override", "y_top=0",
         "--override", "budget=150"]


def run_cli(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def do_small_run(tmp_path, seed="3", preset="synthetic", extra=()):
    out = str(tmp_path / "run")
    result = run_cli("run", "--preset", preset, "--seed", seed,
                     *SMALL, *extra, "--out", out)
    assert result.exit_code == 0, result.output
    return out, result


class TestRun:
    def test_minimal_run_writes_artifacts_and_summary(self, tmp_path):
        out, result = do_small_run(tmp_path)
        for name in ("config.toml", "record.jsonl", "state.json",
                     "summary.json"):
            assert os.path.exists(os.path.join(out, name)), name
        assert "top10_auc" in result.output

    def test_invalid_probability_exits_2_and_names_key(self, tmp_path):
        result = run_cli("run", "--preset", "synthetic",
                         "--override", "p_m=1.5",
                         "--out", str(tmp_path / "x"))
        assert result.exit_code == 2
        assert "p_m" in result.output

    def test_unknown_preset_exits_2(self, tmp_path):
        result = run_cli("run", "--preset", "made_up",
                         "--out", str(tmp_path / "x"))
        assert result.exit_code == 2
        assert "preset" in result.output

    def test_budget_override_caps_oracle_calls(self, tmp_path):
        out, _ = do_small_run(
            tmp_path, extra=("--override", "budget=50",
                             "--override", "n_c=20"))
        record = RunRecord.load_jsonl(os.path.join(out, "record.jsonl"))
        assert len(record.entries) <= 50
        with open(os.path.join(out, "summary.json")) as fh:
            summary = json.load(fh)
        assert summary["oracle_calls"] <= 50

    def test_missing_config_and_preset_exits_2(self):
        result = run_cli("run")
        assert result.exit_code == 2

    def test_seed_changes_results(self, tmp_path):
        out_a, _ = do_small_run(tmp_path / "a", seed="1")
        out_b, _ = do_small_run(tmp_path / "b", seed="2")
        rec_a = RunRecord.load_jsonl(os.path.join(out_a, "record.jsonl"))
        rec_b = RunRecord.load_jsonl(os.path.join(out_b, "record.jsonl"))
        assert rec_a.scalars() != rec_b.scalars()

    def test_same_seed_reproduces_byte_identical_record(self, tmp_path):
        out_a, _ = do_small_run(tmp_path / "a", seed="4")
        out_b, _ = do_small_run(tmp_path / "b", seed="4")
        with open(os.path.join(out_a, "record.jsonl"), "rb") as fh:
            data_a = fh.read()
        with open(os.path.join(out_b, "record.jsonl"), "rb") as fh:
            data_b = fh.read()
        assert data_a == data_b


class TestReport:
    def test_report_recomputes_auc_matching_engine_summary(self, tmp_path):
        out, _ = do_small_run(tmp_path)
        result = run_cli("report", out, "--no-figures")
        assert result.exit_code == 0
        record = RunRecord.load_jsonl(os.path.join(out, "record.jsonl"))
        with open(os.path.join(out, "summary.json")) as fh:
            summary = json.load(fh)
        expected = topk_auc(record.scalars(), 10, summary["budget"])
        assert abs(summary["top10_auc"] - expected) < 1e-12
        reported = [line for line in result.output.splitlines()
                    if line.startswith("top10_auc:")]
        assert reported and abs(float(reported[0].split(":")[1])
                                - expected) < 1e-12

    def test_report_twice_is_byte_identical(self, tmp_path):
        out, _ = do_small_run(tmp_path)
        csv_a = str(tmp_path / "a.csv")
        csv_b = str(tmp_path / "b.csv")
        assert run_cli("report", out, "--csv", csv_a).exit_code == 0
        assert run_cli("report", out, "--csv", csv_b).exit_code == 0
        with open(csv_a, "rb") as fh:
            a = fh.read()
        with open(csv_b, "rb") as fh:
            b = fh.read()
        assert a == b

    def test_figures_rendered_next_to_csv(self, tmp_path):
        out, _ = do_small_run(tmp_path)
        result = run_cli("report", out)
        assert result.exit_code == 0
        assert os.path.exists(os.path.join(out, "topk_curve.png"))

    def test_truncated_record_exits_4_with_line_number(self, tmp_path):
        out, _ = do_small_run(tmp_path)
        path = os.path.join(out, "record.jsonl")
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
        lines[-1] = lines[-1][: len(lines[-1]) // 2]
        with open(path, "w", encoding="utf-8") as fh:
            fh.writelines(lines)
        result = run_cli("report", out)
        assert result.exit_code == 4
        assert f"line {len(lines)}" in result.output

    def test_empty_record_exits_4(self, tmp_path):
        out = tmp_path / "empty"
        out.mkdir()
        (out / "record.jsonl").write_text("")
        result = run_cli("report", str(out))
        assert result.exit_code == 4


class TestResume:
    def test_resume_extends_budget_without_corruption(self, tmp_path):
        out, _ = do_small_run(tmp_path, extra=("--override", "budget=80"))
        result = run_cli("run", "--resume", out, "--seed", "3",
                         "--override", "budget=160")
        assert result.exit_code == 0, result.output
        record = RunRecord.load_jsonl(os.path.join(out, "record.jsonl"))
        indices = [e.call_index for e in record.entries]
        assert indices == sorted(set(indices))
        assert len(record.entries) <= 160


class TestConvert:
    def test_smiles_to_selfies_and_back(self, tmp_path):
        runner = CliRunner()
        to_selfies = runner.invoke(main, ["convert", "--from", "smiles"],
                                   input="CCO\n")
        assert to_selfies.exit_code == 0
        back = runner.invoke(main, ["convert", "--from", "selfies"],
                             input=to_selfies.output)
        assert back.exit_code == 0
        assert back.output.strip() == "CCO"

    def test_garbage_lines_collected_in_rejects(self, tmp_path):
        rejects = str(tmp_path / "rejects.txt")
        runner = CliRunner()
        result = runner.invoke(
            main, ["convert", "--from", "smiles", "--rejects", rejects],
            input="CCO\nnot_a_molecule\nCCN\n")
        assert result.exit_code == 0
        assert len(result.output.strip().split("\n")) == 2
        with open(rejects, encoding="utf-8") as fh:
            text = fh.read()
        assert "line 2" in text and "not_a_molecule" in text

    def test_corpus_sweep_has_no_rejects(self, tmp_path, corpus):
        rejects = str(tmp_path / "rejects.txt")
        runner = CliRunner()
        result = runner.invoke(
            main, ["convert", "--from", "smiles", "--rejects", rejects],
            input="\n".join(corpus) + "\n")
        assert result.exit_code == 0
        with open(rejects, encoding="utf-8") as fh:
            assert fh.read() == ""
