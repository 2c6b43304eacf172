import json

import pytest

from app.cli import EXIT_CHECK_FAILED, EXIT_ERROR, EXIT_OK, build_parser, main
from app.core.dataset_gen import DatasetSpec, generate_dataset


class TestParser:
    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_wifi_scenario_choices(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["wifi", "--scenario", "3"])

    def test_defaults(self):
        args = build_parser().parse_args(["instruct", "--text", "Survey."])
        assert (args.n, args.seed, args.round_budget) == (2, 0, 20)


class TestCommands:
    def test_calibrate(self, capsys):
        assert main(["calibrate"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "log_cw_min" in out
        assert "(2, 4)" in out

    def test_wifi_scenario2_writes_outputs(self, tmp_path, capsys):
        assert main(["wifi", "--scenario", "2", "--out", str(tmp_path), "--check"]) == EXIT_OK

        timeline = json.loads((tmp_path / "timeline.json").read_text())
        assert timeline["scenario_id"] == "wifi-scenario-2"
        assert (tmp_path / "metrics.csv").read_text().startswith("t,round,device_id")
        assert (tmp_path / "m2m.log").stat().st_size > 0
        assert "[pass] switchable_clients_on_5ghz" in capsys.readouterr().out

    def test_wifi_raised_floor_fails_check(self):
        assert main(["wifi", "--scenario", "1", "--floor", "6,9", "--check"]) == EXIT_CHECK_FAILED

    def test_warehouse(self, tmp_path):
        argv = ["warehouse", "--n", "2", "--mode", "dist", "--latency-ms", "50", "--out", str(tmp_path), "--check"]
        assert main(argv) == EXIT_OK
        assert "codegen_ms" in (tmp_path / "metrics.csv").read_text()

    def test_warehouse_missing_config(self, capsys):
        assert main(["warehouse", "--config", "absent.json"]) == EXIT_ERROR
        assert "not found" in capsys.readouterr().err

    def test_instruct(self, capsys):
        code = main(["instruct", "--text", "Please check if there are vacant positions on the shelves."])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "shelf 1 vacant positions" in out
        assert "shelf 2 vacant positions" in out

    def test_instruct_budget_exhausted(self, capsys):
        assert main(["instruct", "--text", "Sing a song.", "--round-budget", "2"]) == EXIT_CHECK_FAILED
        assert "WARNING" in capsys.readouterr().out

    def test_dataset_eval(self, tmp_path, capsys):
        files = generate_dataset(DatasetSpec(counts={1: 6, 2: 6}, test_fraction=0.5), tmp_path)
        failures = tmp_path / "failures.csv"

        assert main(["dataset", "eval", "--test", str(files.test), "--failures-csv", str(failures)]) == EXIT_OK

        assert "accuracy: 1.0000 (6/6)" in capsys.readouterr().out
        assert failures.exists()

    def test_remote_extractor_needs_url(self, tmp_path):
        files = generate_dataset(DatasetSpec(counts={1: 2}, test_fraction=0.5), tmp_path)
        assert main(["dataset", "eval", "--extractor", "remote", "--test", str(files.test)]) == EXIT_ERROR

    @pytest.mark.slow
    def test_dataset_gen(self, tmp_path, capsys):
        assert main(["dataset", "gen", "--scale", "desk", "--out", str(tmp_path)]) == EXIT_OK
        assert "(480 pairs)" in capsys.readouterr().out
        assert json.loads((tmp_path / "manifest.json").read_text())["total"] == 4800
