"""Command-line front end: flags, exit codes, outputs, and oracles."""

import json
import re

import pytest

from linemeet.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestRunCommand:
    def test_summary_line_and_exit_zero(self, capsys):
        code, out, _ = run_cli(capsys, "run", "--topology", "infinite",
                               "--d", "5", "--tau", "0",
                               "--scheme", "sequential")
        assert code == 0
        assert re.search(r"T_rdv=\d+ D=5 tau=0 lmin=\d+ ratio=[\d.]+ "
                         r"case=[\w-]+", out)

    def test_invalid_scheme_exits_two(self, capsys):
        code, _, err = run_cli(capsys, "run", "--scheme", "nonsense")
        assert code == 2
        assert json.loads(err)["error"] == "config"

    def test_invalid_topology_is_a_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--topology", "donut"])
        assert exc.value.code == 2

    def test_node_only_without_care_requires_override(self, capsys):
        code, _, err = run_cli(capsys, "run", "--detection", "node-only",
                               "--no-care")
        assert code == 2
        assert "warning" in err
        assert json.loads(err.splitlines()[-1])["error"] == "config"

    def test_mispairing_override_runs_with_warning(self, capsys):
        code, out, err = run_cli(capsys, "run", "--detection", "node-only",
                                 "--no-care", "--allow-mispairing")
        assert code == 0
        assert "warning" in err
        assert "T_rdv=" in out

    def test_node_only_defaults_to_care(self, capsys):
        code, out, err = run_cli(capsys, "run", "--detection", "node-only",
                                 "--d", "3")
        assert code == 0
        assert "warning" not in err
        assert "T_rdv=" in out

    def test_trace_output(self, capsys, tmp_path):
        path = tmp_path / "trace.jsonl"
        code, out, _ = run_cli(capsys, "run", "--d", "3", "--out", str(path))
        assert code == 0
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])["runspec"]
        assert header["command"] == "run" and header["d"] == 3
        t = int(re.search(r"T_rdv=(\d+)", out).group(1))
        assert len(lines) == t + 2
        last = json.loads(lines[-1])
        assert last["round"] == t
        assert last["event"] in ("node", "crossing")

    def test_bound_violation_exits_one(self, capsys):
        code, out, err = run_cli(capsys, "run", "--d", "3",
                                 "--round-cap", "10")
        assert code == 1
        assert "T_rdv=NONE" in out
        assert json.loads(err)["error"] == "bound-violation"

    def test_config_file_fills_flags(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("d = 5\ntau = 3\n# a comment\nscheme = sequential\n")
        code, out, _ = run_cli(capsys, "run", "--config", str(cfg))
        assert code == 0
        assert "D=5 tau=3" in out

    def test_explicit_flag_beats_config_file(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("d = 5\ntau = 3\n")
        code, out, _ = run_cli(capsys, "run", "--config", str(cfg),
                               "--tau", "0")
        assert code == 0
        assert "D=5 tau=0" in out

    def test_unknown_config_key_exits_two(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("flux = 9\n")
        code, _, err = run_cli(capsys, "run", "--config", str(cfg))
        assert code == 2
        assert "flux" in json.loads(err)["detail"]


class TestSweepCommand:
    ARGS = ("sweep", "--d", "1..4", "--tau", "0,1,D",
            "--scheme", "sequential")

    def test_summary_and_exit_zero(self, capsys):
        code, out, _ = run_cli(capsys, *self.ARGS)
        assert code == 0
        # d=1 deduplicates the delays 1 and D
        assert "cells=11" in out
        assert re.search(r"max ratio=[\d.]+ at D=\d+ tau=\d+ scheme=", out)
        assert re.search(r"cases: (\S+=\d+ ?)+", out)
        assert "violations=0" in out

    def test_csv_reruns_byte_identical(self, capsys, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run_cli(capsys, *self.ARGS, "--out", str(p1))[0] == 0
        assert run_cli(capsys, *self.ARGS, "--out", str(p2))[0] == 0
        assert p1.read_bytes() == p2.read_bytes()
        lines = p1.read_text().splitlines()
        spec = json.loads(lines[0].removeprefix("# runspec="))
        assert spec["command"] == "sweep" and spec["d"] == "1..4"
        assert len(lines) == 2 + 11

    def test_parallel_jobs_do_not_change_the_csv(self, capsys, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli(capsys, *self.ARGS, "--out", str(p1))
        run_cli(capsys, *self.ARGS, "--jobs", "2", "--out", str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_large_delay_band_is_all_out_of_sync(self, capsys):
        code, out, _ = run_cli(capsys, "sweep", "--d", "2,4",
                               "--tau", "10D,10D+7,12D",
                               "--scheme", "sequential")
        assert code == 0
        counts = dict(pair.split("=") for pair in
                      re.search(r"cases: (.*)", out).group(1).split())
        assert int(counts["out-of-sync"]) > 0

    def test_empty_grid_is_a_config_error(self, capsys):
        code, _, err = run_cli(capsys, "sweep", "--d", "", "--tau", "0",
                               "--scheme", "sequential")
        assert code == 2
        assert "empty" in json.loads(err)["detail"]

    def test_bad_delay_token(self, capsys):
        code, _, err = run_cli(capsys, "sweep", "--d", "1",
                               "--tau", "5X", "--scheme", "sequential")
        assert code == 2
        assert "delay token" in json.loads(err)["detail"]

    def test_cap_violations_exit_one(self, capsys):
        code, out, _ = run_cli(capsys, "sweep", "--d", "3", "--tau", "0",
                               "--scheme", "sequential",
                               "--round-cap", "10")
        assert code == 1
        assert "violations=1" in out


class TestVerifyCommand:
    def test_carefulwalk(self, capsys):
        code, out, _ = run_cli(capsys, "verify", "carefulwalk")
        assert code == 0
        assert "14 cases, all meet" in out

    def test_rulingset(self, capsys):
        code, out, _ = run_cli(capsys, "verify", "rulingset",
                               "--trials", "25")
        assert code == 0
        assert "0 failures" in out

    def test_escolruling(self, capsys):
        code, out, _ = run_cli(capsys, "verify", "escolruling",
                               "--trials", "10")
        assert code == 0
        assert "0 failures" in out

    def test_locality_smoke_window(self, capsys):
        code, out, _ = run_cli(capsys, "verify", "locality",
                               "--r", "4", "--universe", "128")
        assert code == 0
        assert "all within 424*R*logstar" in out

    def test_locality_certifies_nodes(self, capsys):
        code, out, _ = run_cli(capsys, "verify", "locality",
                               "--r", "1", "--universe", "200")
        assert code == 0
        certified = int(re.search(r"locality: (\d+) certified", out).group(1))
        assert certified > 0


class TestConstantsCommand:
    def test_report(self, capsys):
        code, out, _ = run_cli(capsys, "constants")
        assert code == 0
        assert "kappa = 424" in out
        assert "L=256: start=7140" in out
        assert "R=4: class ends 112 224 371 868 5320 9807" in out
        assert "R=64: class ends 2032 4064 6671 15028 88360 162267" in out
        assert "consistent" in out and "INCONSISTENT" not in out
