import csv

import pytest

from sicra import cli
from sicra.analysis import PolicyTable, build_policy_table


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestTables:
    def test_prints_published_row(self, capsys, tmp_path):
        out = tmp_path / "tables.csv"
        rc = cli.main(["tables", "--M", "1,2", "--pe", "0", "--out", str(out)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "1.3782" in text and "0.5586" in text and "2.0457" in text
        rows = read_csv(out)
        assert rows[0] == ["M", "p_e", "x_star", "s_star", "c_m",
                           "srp_mean", "retx_probs"]
        assert len(rows) == 3

    def test_policy_files_round_trip(self, tmp_path):
        outdir = tmp_path / "policies"
        rc = cli.main(["tables", "--M", "3", "--pe", "0.5",
                       "--policy-out", str(outdir)])
        assert rc == 0
        text = (outdir / "policy_M3_pe0.5.txt").read_text()
        parsed = PolicyTable.from_text(text)
        assert parsed == build_policy_table(3, 0.5)


class TestSimulate:
    def test_deterministic_outputs(self, tmp_path):
        args = ["simulate", "--M", "2", "--lambda", "0.3", "--horizon", "15000",
                "--warmup", "2000", "--seed", "4"]
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert cli.main(args + ["--out", str(out1)]) == 0
        assert cli.main(args + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        rows = read_csv(out1)
        assert rows[0] == ["lambda", "throughput", "mean_delay",
                           "collision_rate", "idle_rate", "srp_fraction"]

    def test_estimator_trace_schema(self, tmp_path):
        trace = tmp_path / "est.csv"
        rc = cli.main(["simulate", "--M", "2", "--lambda", "0.3",
                       "--horizon", "5000", "--warmup", "100", "--seed", "4",
                       "--estimator-trace", str(trace)])
        assert rc == 0
        rows = read_csv(trace)
        assert rows[0] == ["slot", "event", "nu", "lambda_e", "p_star"]
        assert all(r[1] in ("idle", "success", "srp", "collision")
                   for r in rows[1:])
        assert all(0.0 < float(r[4]) <= 1.0 for r in rows[1:])


class TestSweep:
    def test_csv_artifact(self, tmp_path):
        out = tmp_path / "sweep.csv"
        rc = cli.main(["sweep", "--M", "2", "--lambda", "0.1,0.2,0.3",
                       "--horizon", "8000", "--warmup", "1000",
                       "--seed", "2", "--out", str(out)])
        assert rc == 0
        rows = read_csv(out)
        assert len(rows) == 4
        lams = [float(r[0]) for r in rows[1:]]
        assert lams == [0.1, 0.2, 0.3]
        for r in rows[1:]:
            assert float(r[1]) <= 1.0

    def test_grid_range_syntax(self):
        assert cli._parse_grid("0.1:0.3:0.1") == pytest.approx([0.1, 0.2, 0.3])
        assert cli._parse_grid("0.25") == [0.25]


class TestTrace:
    def test_trace_csv(self, tmp_path):
        out = tmp_path / "trace.csv"
        rc = cli.main(["trace", "--M", "2", "--horizon", "6000",
                       "--episodes", "2", "--seed", "3", "--out", str(out)])
        assert rc == 0
        rows = read_csv(out)
        assert rows[0] == ["slot", "true_backlog", "estimated_nu"]
        assert len(rows) == 6001


class TestValidateSrp:
    def test_passes_with_enough_trials(self, capsys):
        rc = cli.main(["validate-srp", "--m", "2", "--pe", "0",
                       "--trials", "30000", "--seed", "6"])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out

    def test_fails_when_estimate_is_off(self, monkeypatch, capsys):
        monkeypatch.setattr(cli, "mc_duration_mean",
                            lambda *a, **k: (99.0, 0.001))
        rc = cli.main(["validate-srp", "--m", "2", "--pe", "0",
                       "--trials", "10", "--seed", "6"])
        assert rc == 1
        assert "FAIL" in capsys.readouterr().out


class TestConfigFile:
    def test_file_then_flag_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("M = 3\nlambda = 0.2\nhorizon = 6000\nwarmup = 500\n")
        rc = cli.main(["simulate", "--config", str(cfg), "--lambda", "0.1",
                       "--seed", "5", "--print-config"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "M = 3" in out            # from file
        assert "lambda = 0.1" in out     # flag overrides file
        assert "horizon = 6000" in out
        assert "seed = 5" in out

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("bogus = 1\n")
        with pytest.raises(SystemExit):
            cli.main(["simulate", "--config", str(cfg)])
