import json
import math

import pytest

from nlpde.cli import (
    EXIT_CERTIFICATE,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_ORACLE,
    EXIT_OVERFLOW,
    main,
)
from nlpde.config import ConfigError, RunConfig
from nlpde.io import read_csv, read_snapshot

SMALL = {
    "model": {"preset": "debye"},
    "grid": {"d": 2, "n": 32, "period": 2 * math.pi},
    "initial": {"kind": "random_hermitian", "params": {"amplitude": 0.5, "bandwidth": 4}},
    "solver": {"dt": 1e-3, "t_end": 0.1, "snapshot_every": 25, "diagnostics_every": 10},
    "seed": 3,
}


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


class TestConfig:
    def test_roundtrip(self):
        cfg = RunConfig.from_dict(SMALL)
        assert RunConfig.from_json(cfg.to_json()) == cfg

    def test_defaults_valid(self):
        RunConfig().validate()

    @pytest.mark.parametrize("bad", [
        {"grid": {"d": 5}},
        {"grid": {"n": 30}},
        {"model": {"preset": "plasma"}},
        {"model": {"preset": "general"}},
        {"solver": {"dt": -1}},
        {"solver": {"scheme": "rk45"}},
        {"initial": {"kind": "spiral"}},
        {"colour": "blue"},
        {"grid": {"d": 2, "size": 3}},
    ])
    def test_rejected(self, bad):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(bad).validate()

    def test_invalid_json(self):
        with pytest.raises(ConfigError):
            RunConfig.from_json("{not json")


class TestSimulate:
    def test_outputs(self, tmp_path):
        out = tmp_path / "run"
        assert main(["simulate", "--config", _write(tmp_path, SMALL), "--out", str(out)]) == EXIT_OK
        header, rows = read_csv(out / "norms.csv")
        assert header[0] == "time" and len(rows) == 11
        snaps = sorted((out / "snapshots").iterdir())
        assert len(snaps) == 5
        assert read_snapshot(snaps[-1]).time == pytest.approx(0.1)
        summary = json.loads((out / "run_summary.json").read_text())
        assert summary["status"] == "completed" and summary["mass_drift"] <= 1e-13

    def test_deterministic(self, tmp_path):
        cfg = _write(tmp_path, SMALL)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg, "--out", str(a)]) == EXIT_OK
        assert main(["simulate", "--config", cfg, "--out", str(b)]) == EXIT_OK
        assert (a / "norms.csv").read_bytes() == (b / "norms.csv").read_bytes()
        for sa, sb in zip(sorted((a / "snapshots").iterdir()), sorted((b / "snapshots").iterdir())):
            assert sa.read_bytes() == sb.read_bytes()
        ja, jb = (json.loads((p / "run_summary.json").read_text()) for p in (a, b))
        ja.pop("wallclock"), jb.pop("wallclock")
        assert ja == jb

    def test_bad_config_writes_nothing(self, tmp_path):
        out = tmp_path / "never"
        code = main(["simulate", "--config", _write(tmp_path, {"grid": {"d": 5}}),
                     "--out", str(out)])
        assert code == EXIT_CONFIG and not out.exists()

    def test_missing_file(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG

    def test_overflow_exit(self, tmp_path):
        data = {
            "model": {"preset": "gravitating"},
            "grid": {"d": 2, "n": 64, "period": 16 * math.pi},
            "initial": {"kind": "fourier_bump", "params": {"amplitude": 3000.0}},
            "solver": {"dt": 1e-3, "t_end": 0.25, "halfspace": True, "overflow_guard": 1e7,
                       "snapshot_every": 50, "diagnostics_every": 50},
        }
        out = tmp_path / "blow"
        assert main(["simulate", "--config", _write(tmp_path, data), "--out", str(out)]) == EXIT_OVERFLOW
        summary = json.loads((out / "run_summary.json").read_text())
        assert summary["status"] == "overflow_detected" and summary["final_time"] < 0.25


class TestCertify:
    def test_recursion_only(self, tmp_path):
        out = tmp_path / "rep.json"
        assert main(["certify", "--dim", "2", "--kmax", "4", "--out", str(out)]) == EXIT_OK
        rep = json.loads(out.read_text())
        assert rep["pass"] and rep["A"] == pytest.approx(2 * rep["A_star"])

    def test_unresolved_level_fails(self, tmp_path):
        # level 2 lies beyond the dealiased band of n = 128, so it cannot be certified
        out = tmp_path / "rep.json"
        code = main(["certify", "--dim", "2", "--kmax", "2", "--mode", "solver_coupled",
                     "--A", "400", "--n", "128", "--out", str(out)])
        assert code == EXIT_CERTIFICATE
        rep = json.loads(out.read_text())
        assert [b["pass"] for b in rep["barrier"]] == [True, True, False]

    @pytest.mark.parametrize("argv", [
        ["--A", "lots"], ["--kmax", "2"], ["--A", "-3"], ["--mode", "both"],
    ])
    def test_config_errors(self, tmp_path, argv):
        code = main(["certify", "--out", str(tmp_path / "r.json")] + argv)
        assert code == EXIT_CONFIG


class TestLemmas:
    def test_chandrasekhar(self, tmp_path, capsys):
        out = tmp_path / "c.csv"
        assert main(["lemmas", "--which", "chandrasekhar", "--out", str(out)]) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["max_residual"] <= 1e-12
        header, rows = read_csv(out)
        assert header[-1] == "residual" and len(rows) == 50

    def test_unknown_sweep(self, tmp_path):
        assert main(["lemmas", "--which", "lemma9", "--out", str(tmp_path / "x")]) == EXIT_CONFIG


class TestCompareOracle:
    BASE = {
        "model": {"preset": "gravitating"},
        "grid": {"d": 2, "n": 32},
        "initial": {"kind": "random_hermitian", "params": {"amplitude": 0.5, "bandwidth": 8}},
        "solver": {"dt": 1e-3, "t_end": 0.05, "dealias_cutoff": 8},
        "oracle": {"R": 8, "steps": 200},
        "seed": 1,
    }

    def test_agreement(self, tmp_path):
        assert main(["compare-oracle", "--config", _write(tmp_path, self.BASE)]) == EXIT_OK

    def test_mismatch(self, tmp_path):
        data = json.loads(json.dumps(self.BASE))
        data["initial"]["params"]["amplitude"] = 4.0
        del data["solver"]["dealias_cutoff"]
        assert main(["compare-oracle", "--config", _write(tmp_path, data)]) == EXIT_ORACLE

    def test_lattice_too_large(self, tmp_path):
        data = dict(self.BASE, oracle={"R": 12})
        assert main(["compare-oracle", "--config", _write(tmp_path, data)]) == EXIT_CONFIG


def test_no_command():
    assert main([]) == EXIT_CONFIG
