"""
Tests for the hybran command line.
"""

import csv
import json
from unittest.mock import patch

import pytest

from hybrid_automaton.exceptions import InvalidArgumentError
from hybrid_automaton.main import main, parse_box, parse_ints
from hybrid_automaton.models import RunRecord
from hybrid_automaton.repositories.model_repository import ModelRepository
from hybrid_automaton.repositories.run_repository import RunRepository


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as handle:
        return list(csv.reader(handle))


@pytest.fixture
def trained_model(tmp_path, no_ledger, capsys):
    data = tmp_path / "d.csv"
    model = tmp_path / "m.json"
    assert main(["gen-data", "--traces", "5", "--steps", "20", "--seed", "3", "--out", str(data)]) == 0
    args = ["train", "--traces", str(data), "--segments", "2,2", "--hidden", "4", "--epochs", "20", "--lr", "0.01"]
    assert main(args + ["--backend", "local", "--workers", "1", "--out", str(model)]) == 0
    capsys.readouterr()
    return model


class TestParsers:
    """Tests for the argument parsers."""

    def test_parse_box(self):
        """Test the lo,hi;lo,hi box syntax."""
        box = parse_box("-4,4;-3.5,3.5")
        assert box.bounds() == [(-4.0, 4.0), (-3.5, 3.5)]

    def test_parse_box_rejects_bad_pairs(self):
        """Test that each dimension needs two numbers."""
        with pytest.raises(InvalidArgumentError):
            parse_box("0,1,2")
        with pytest.raises(InvalidArgumentError):
            parse_box("1,0")

    def test_parse_ints(self):
        """Test the integer list syntax."""
        assert parse_ints("4,3") == [4, 3]
        with pytest.raises(InvalidArgumentError):
            parse_ints("4,x")


class TestGenData:
    """Tests for the gen-data command."""

    def test_single_step_trace(self, tmp_path, no_ledger):
        """Test that one trace of one step is a header and two rows."""
        out = tmp_path / "d.csv"
        assert main(["gen-data", "--traces", "1", "--steps", "1", "--out", str(out)]) == 0
        lines = read_rows(out)
        assert len(lines) == 3
        assert lines[0] == ["trace_id", "k", "x1", "x2", "u1"]
        assert lines[2][-1] == ""

    def test_default_experiment_size(self, tmp_path, no_ledger):
        """Test that 50 traces of 150 steps give 1 + 50 * 151 lines."""
        out = tmp_path / "d.csv"
        assert main(["gen-data", "--traces", "50", "--steps", "150", "--seed", "0", "--out", str(out)]) == 0
        assert len(out.read_text(encoding="utf-8").splitlines()) == 7551

    def test_manifest_written(self, tmp_path, no_ledger):
        """Test that the run manifest records command, seed and version."""
        out = tmp_path / "d.csv"
        main(["gen-data", "--traces", "2", "--steps", "3", "--seed", "11", "--out", str(out)])
        manifest = RunRepository().load_manifest(out)
        assert manifest.command == "gen-data"
        assert manifest.seed == 11
        assert manifest.tool_version == "0.1.0"
        assert manifest.timings["rows"] == 8
        assert manifest.config["prng"] == "numpy.PCG64"

    def test_deterministic(self, tmp_path, no_ledger):
        """Test that identical invocations write identical files."""
        for name in ("a.csv", "b.csv"):
            main(["gen-data", "--traces", "3", "--steps", "10", "--seed", "5", "--out", str(tmp_path / name)])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_bad_box_exits_1(self, tmp_path, no_ledger, capsys):
        """Test that an invalid box is a usage error with exit code 1."""
        code = main(["gen-data", "--init-box", "1,0;0,1", "--out", str(tmp_path / "d.csv")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_unwritable_output_exits_2(self, tmp_path, no_ledger):
        """Test that an I/O failure exits with code 2."""
        blocker = tmp_path / "file"
        blocker.write_text("x", encoding="utf-8")
        assert main(["gen-data", "--traces", "1", "--steps", "1", "--out", str(blocker / "d.csv")]) == 2

    def test_unknown_option(self):
        """Test that argparse rejects unknown options."""
        with pytest.raises(SystemExit):
            main(["gen-data", "--bogus"])


class TestTrainEvalSimulate:
    """Tests for train, eval and simulate."""

    def test_train_outputs(self, trained_model):
        """Test that training writes the model, the holdout traces and a manifest."""
        automaton = ModelRepository().load(trained_model)
        assert len(automaton.nets) == 4
        assert automaton.meta["mode"] == "hybrid"
        assert (trained_model.parent / "m.json.test.csv").exists()
        assert RunRepository().load_manifest(trained_model).command == "train"

    def test_train_single_mode(self, tmp_path, no_ledger, capsys):
        """Test that single mode writes a one-cell model."""
        data, model = tmp_path / "d.csv", tmp_path / "s.json"
        main(["gen-data", "--traces", "3", "--steps", "10", "--out", str(data)])
        code = main(
            ["train", "--traces", str(data), "--mode", "single", "--epochs", "5", "--workers", "1", "--out", str(model)]
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["cells"] == 1
        assert summary["mode"] == "single"

    def test_eval(self, trained_model, tmp_path, capsys):
        """Test that eval prints one row per model and writes the table."""
        out = tmp_path / "eval.json"
        code = main(
            ["eval", "--model", str(trained_model), "--traces", f"{trained_model}.test.csv", "--out", str(out)]
        )
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        assert rows[0]["mode"] == "hybrid"
        assert rows[0]["mse"] >= 0.0
        assert json.loads(out.read_text(encoding="utf-8")) == rows

    def test_simulate_zero_steps(self, trained_model, tmp_path):
        """Test that zero steps writes only the initial state."""
        out = tmp_path / "sim.csv"
        assert main(["simulate", "--model", str(trained_model), "--x0", "1,0", "--steps", "0", "--out", str(out)]) == 0
        lines = read_rows(out)
        assert lines[0] == ["sim", "k", "cell", "x1", "x2"]
        assert lines[1][:2] == ["0", "0"]
        assert lines[1][3:] == ["1", "0"]
        assert len(lines) == 2

    def test_simulate_batch(self, trained_model, tmp_path):
        """Test several runs from an initial box."""
        out = tmp_path / "sim.csv"
        args = ["simulate", "--model", str(trained_model), "--init-box", "0,1;0,1", "--count", "3"]
        assert main(args + ["--steps", "10", "--out", str(out)]) == 0
        assert len(read_rows(out)) == 1 + 3 * 11

    def test_corrupt_model_exits_1(self, tmp_path, no_ledger):
        """Test that an invalid model file is a validation error."""
        model = tmp_path / "bad.json"
        model.write_text('{"version": 1}', encoding="utf-8")
        code = main(["simulate", "--model", str(model), "--x0", "0,0", "--out", str(tmp_path / "s.csv")])
        assert code == 1

    def test_missing_model_exits_2(self, tmp_path, no_ledger):
        """Test that a missing model file is an I/O error."""
        code = main(["simulate", "--model", str(tmp_path / "none.json"), "--x0", "0,0", "--out", str(tmp_path / "s")])
        assert code == 2


class TestReach:
    """Tests for the reach command."""

    def test_zero_steps(self, trained_model, tmp_path):
        """Test that zero steps writes only the split initial set."""
        prefix = tmp_path / "r"
        args = ["reach", "--model", str(trained_model), "--init-box", "0.5,1;0.5,1"]
        code = main(args + ["--steps", "0", "--out-prefix", str(prefix)])
        assert code == 0
        lines = read_rows(f"{prefix}.reach.csv")
        assert lines[0] == ["k", "cell", "lo1", "lo2", "hi1", "hi2"]
        assert {line[0] for line in lines[1:]} == {"0"}

    def test_outputs_and_svg(self, trained_model, tmp_path):
        """Test the CSV tables and one SVG rectangle per fragment row."""
        prefix = tmp_path / "r"
        code = main(
            [
                "reach",
                "--model",
                str(trained_model),
                "--init-box",
                "0.5,1;-0.5,0.5",
                "--steps",
                "10",
                "--overlay-sim",
                "5",
                "--out-prefix",
                str(prefix),
            ]
        )
        assert code == 0
        fragments = read_rows(f"{prefix}.reach.csv")[1:]
        svg = (tmp_path / "r.svg").read_text(encoding="utf-8")
        assert svg.count('id="fragment-') == len(fragments)
        assert svg.count('id="sim-') == 5
        assert len(read_rows(f"{prefix}.timing.csv")) == 12
        assert len(read_rows(f"{prefix}.volume.csv")) == 12
        manifest = RunRepository().load_manifest(prefix)
        assert manifest.timings["monte_carlo_violations"] == 0

    def test_deterministic(self, trained_model, tmp_path):
        """Test that repeated reach runs write identical fragment tables."""
        for name in ("a", "b"):
            main(
                [
                    "reach",
                    "--model",
                    str(trained_model),
                    "--init-box",
                    "-1,1;-1,1",
                    "--steps",
                    "5",
                    "--out-prefix",
                    str(tmp_path / name),
                ]
            )
        assert (tmp_path / "a.reach.csv").read_bytes() == (tmp_path / "b.reach.csv").read_bytes()

    def test_compare_model(self, trained_model, tmp_path):
        """Test that a baseline model adds the comparison table."""
        prefix = tmp_path / "r"
        args = ["reach", "--model", str(trained_model), "--compare-model", str(trained_model)]
        assert main(args + ["--init-box", "0,1;0,1", "--steps", "3", "--out-prefix", str(prefix)]) == 0
        lines = read_rows(f"{prefix}.compare.csv")
        assert lines[0] == ["k", "seconds", "baseline_seconds", "volume", "baseline_volume"]
        assert len(lines) == 5

    def test_fragment_overflow_exits_1(self, trained_model, tmp_path):
        """Test that exceeding the fragment cap is reported as a failure."""
        args = ["reach", "--model", str(trained_model), "--merge", "exact-union", "--max-fragments", "1"]
        code = main(args + ["--init-box", "-1,1;-1,1", "--steps", "5", "--out-prefix", str(tmp_path / "r")])
        assert code == 1


class TestLedger:
    """Tests for the run ledger hook."""

    @pytest.mark.django_db
    def test_runs_are_recorded(self, tmp_path, settings):
        """Test that an enabled ledger migrates and stores the run."""
        settings.HYBRAN_RECORD_RUNS = True
        with patch("hybrid_automaton.main.call_command") as mock_call:
            assert main(["gen-data", "--traces", "1", "--steps", "2", "--out", str(tmp_path / "d.csv")]) == 0
            mock_call.assert_called_once()
        record = RunRecord.objects.get()
        assert record.command == "gen-data"
        assert record.paths == {"out": str(tmp_path / "d.csv")}


class TestVersion:
    """Tests for the version command."""

    def test_version(self, capsys):
        """Test that the version is printed."""
        assert main(["version"]) == 0
        assert capsys.readouterr().out.strip() == "0.1.0"
