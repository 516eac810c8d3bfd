import json
import re

import numpy as np
import pytest

from ensemble_memory import cli
from ensemble_memory.config import ConfigError, Grid, parse_config
from ensemble_memory.errors import NumericalError

WRITE = """\
# minimal write config
[system]
C = 100
gamma_eff = 0.075
gamma0 = 0.001
kappa = 10

[mode]
type = EIT

[scenario]
type = write
R_in = 0.5
"""

EPR = """\
[system]
C = 100
gamma_eff = 0.075
gamma0 = 1e-3
kappa = 10
[mode]
type = EIT
[scenario]
type = epr
i_f = 1.0
"""

FIG5 = """\
[system]
C = 1e4
gamma_pump = 0.01
gamma0 = 0
kappa = 100
[mode]
type = EIT
[scenario]
type = repeater
spin1_squeezing = 0.5
t_grid = 0:600:601
"""


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# units: gamma = 1")
    header = lines[1].split(",")
    return header, [dict(zip(header, ln.split(","))) for ln in lines[2:]]


class TestParse:
    def test_minimal_write(self):
        cfg = parse_config(WRITE)
        assert cfg.scenario_type == "write"
        assert cfg.style == "derived"
        assert cfg.echo()["system"] == {"C": 100.0, "gamma_eff": 0.075, "gamma0": 0.001,
                                        "kappa": 10.0}
        assert cfg.echo()["scenario"] == {"type": "write", "R_in": 0.5}

    def test_roundtrip(self):
        cfg = parse_config(WRITE)
        again = parse_config(cfg.to_text())
        assert again.echo() == cfg.echo()

    def test_derived_backsolve(self):
        p = parse_config(WRITE).params()
        assert p.cooperativity == pytest.approx(100.0)
        assert p.gamma == 1.0

    def test_raw_style(self):
        text = WRITE.replace("C = 100\ngamma_eff = 0.075\n",
                             "g = 0.001\nn_atoms = 1e6\ntau = 0.005\nomega_rabi = 2\n")
        cfg = parse_config(text)
        assert cfg.style == "raw"
        assert cfg.params().cooperativity == pytest.approx(1e-6 * 1e6 / (2 * 10 * 0.005))

    def test_conflicting_styles(self):
        with pytest.raises(ConfigError, match="conflicting parameter styles"):
            parse_config(WRITE.replace("C = 100", "C = 100\ng = 0.1"))

    def test_negative_gamma0_line_numbered(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(WRITE.replace("gamma0 = 0.001", "gamma0 = -1"))
        assert exc.value.line == 5
        assert str(exc.value).startswith("line 5:")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="line 5: duplicate key 'gamma_eff'"):
            parse_config(WRITE.replace("gamma_eff = 0.075", "gamma_eff = 0.075\ngamma_eff = 0.07"))

    def test_missing_section(self):
        with pytest.raises(ConfigError, match=r"missing section \[mode\]"):
            parse_config(WRITE.replace("[mode]\ntype = EIT\n", ""))

    @pytest.mark.parametrize("bad,msg", [
        ("kappa = 10\nfoo = 1", "unknown key 'foo'"),
        ("kappa = nan", "finite"),
        ("kappa = inf", "finite"),
        ("kappa = ten", "expected a number"),
        ("kappa 10", "cannot parse"),
        ("kappa = 0", "must be > 0"),
    ])
    def test_rejections(self, bad, msg):
        with pytest.raises(ConfigError, match=msg):
            parse_config(WRITE.replace("kappa = 10", bad))

    def test_scenario_key_checks(self):
        with pytest.raises(ConfigError, match="unknown key 'i_f' for scenario 'write'"):
            parse_config(WRITE + "i_f = 1\n")
        with pytest.raises(ConfigError, match="either r or R_in"):
            parse_config(WRITE + "r = 0.3\n")
        with pytest.raises(ConfigError, match="R_in"):
            parse_config(WRITE.replace("R_in = 0.5", "R_in = 1.5"))

    def test_raman_needs_detuning(self):
        with pytest.raises(ConfigError, match="detuning"):
            parse_config(WRITE.replace("type = EIT", "type = Raman"))

    def test_gamma_is_unit(self):
        with pytest.raises(ConfigError, match="gamma is the unit"):
            parse_config(WRITE.replace("kappa = 10", "kappa = 10\ngamma = 2"))

    def test_grid(self):
        cfg = parse_config(WRITE + "omega_grid = 0:0.5:11\n")
        g = cfg.scenario["omega_grid"]
        assert isinstance(g, Grid)
        assert np.allclose(g.values(), np.linspace(0, 0.5, 11))

    def test_grid_only_for_sweep_key(self):
        with pytest.raises(ConfigError):
            parse_config(WRITE.replace("C = 100", "C = 10:200:20"))
        cfg = parse_config(WRITE.replace("C = 100", "C = 10:200:20"), grid_key="C")
        assert cfg.system["C"] == Grid(10.0, 200.0, 20)


class TestFormatting:
    @pytest.mark.parametrize("x,expected", [
        (1.0, "1.00000000000"),
        (0.5025, "0.502500000000"),
        (123456.789, "123456.789000"),
        (1e-7, "0.000000100000000000"),
    ])
    def test_fixed_12_significant(self, x, expected):
        assert cli.fmt_number(x) == expected

    def test_no_exponent(self):
        for x in (1e-12, 3.3e8, -2.5e-5):
            s = cli.fmt_number(x)
            assert "e" not in s.lower()
            assert len(re.sub(r"[^0-9]", "", s).lstrip("0")) == 12


class TestRun:
    def test_vacuum_write_row(self, tmp_path):
        out = tmp_path / "w.csv"
        code = cli.main(["run", "--config", _write(tmp_path, WRITE.replace("R_in = 0.5\n", "")),
                         "--out", str(out)])
        assert code == 0
        header, rows = _rows(out)
        assert header == ["name", "numeric", "analytic", "rel_dev", "pass"]
        row = rows[0]
        assert row["name"] == "var_min"
        assert float(row["numeric"]) == pytest.approx(1.0, abs=1e-6)
        assert float(row["analytic"]) == 1.0
        assert float(row["rel_dev"]) < 1e-6 and row["pass"] == "pass"
        assert b"\r" not in out.read_bytes()

    def test_series_files(self, tmp_path):
        out = tmp_path / "w.csv"
        assert cli.main(["run", "--config", _write(tmp_path, WRITE), "--out", str(out)]) == 0
        header, _ = _rows(tmp_path / "w_trajectory.csv")
        assert header == ["t", "var_jx", "var_jy", "var_min", "theta_min"]
        header, rows = _rows(tmp_path / "w_spectrum.csv")
        assert header == ["omega", "s_value"]
        assert len(rows) == 401

    def test_epr_json(self, tmp_path):
        out = tmp_path / "e.json"
        assert cli.main(["run", "--config", _write(tmp_path, EPR), "--out", str(out),
                         "--format", "json"]) == 0
        doc = json.loads(out.read_text())
        assert doc["numeric"]["i_at"] == pytest.approx(1.018, rel=0.05)
        assert doc["numeric"]["entangled"] is True
        assert doc["config"]["scenario"] == {"type": "epr", "i_f": 1.0}
        assert doc["passed"] is True

    def test_fig5_trajectory(self, tmp_path):
        out = tmp_path / "r.csv"
        assert cli.main(["run", "--config", _write(tmp_path, FIG5), "--out", str(out)]) == 0
        _, rows = _rows(tmp_path / "r_trajectory.csv")
        t = np.array([float(r["t"]) for r in rows])
        vx = np.array([float(r["var_jx"]) for r in rows])
        i = int(np.argmin(vx))
        assert t[i] * 0.01 == pytest.approx(1.0, rel=0.05)
        assert vx[i] == pytest.approx(0.729, rel=0.02)

    def test_output_from_config(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        text = EPR + "[output]\npath = sub/epr.json\nformat = json\n"
        assert cli.main(["run", "--config", _write(tmp_path, text)]) == 0
        assert (tmp_path / "sub" / "epr.json").exists()

    def test_tolerance_failure_exit(self, tmp_path):
        # far outside the adiabatic regime the closed forms no longer hold
        text = WRITE.replace("C = 100", "C = 0.5").replace("gamma_eff = 0.075", "gamma_eff = 0.6")
        text = text.replace("kappa = 10", "kappa = 0.5")
        out = tmp_path / "bad.csv"
        assert cli.main(["run", "--config", _write(tmp_path, text), "--out", str(out)]) == 1
        _, rows = _rows(out)
        assert any(r["pass"] == "fail" for r in rows)

    def test_config_error_exit(self, tmp_path, capsys):
        path = _write(tmp_path, WRITE.replace("gamma0 = 0.001", "gamma0 = -1"))
        assert cli.main(["run", "--config", path]) == 2
        assert "line 5" in capsys.readouterr().err

    def test_missing_file_exit(self, tmp_path):
        assert cli.main(["validate", "--config", str(tmp_path / "nope.cfg")]) == 2

    def test_numeric_failure_exit(self, tmp_path, monkeypatch):
        def boom(cfg):
            raise NumericalError("covariance lost positivity")
        monkeypatch.setattr(cli, "run_config", boom)
        assert cli.main(["run", "--config", _write(tmp_path, WRITE)]) == 3

    def test_warnings_to_stderr_only(self, tmp_path, capsys):
        text = WRITE.replace("C = 100", "C = 3")
        out = tmp_path / "w.csv"
        cli.main(["run", "--config", _write(tmp_path, text), "--out", str(out)])
        assert "C >> 1" in capsys.readouterr().err
        assert "C >> 1" not in out.read_text()

    def test_validate(self, tmp_path, capsys):
        assert cli.main(["validate", "--config", _write(tmp_path, WRITE)]) == 0
        assert capsys.readouterr().out.startswith("ok:")


class TestSweep:
    def test_sweep(self, tmp_path):
        text = WRITE.replace("C = 100", "C = 20:200:4")
        out_dir = tmp_path / "sw"
        code = cli.main(["sweep", "--config", _write(tmp_path, text), "--key", "C",
                         "--out-dir", str(out_dir)])
        assert code == 0
        header, rows = _rows(out_dir / "summary.csv")
        assert header == ["index", "C", "name", "numeric", "analytic", "rel_dev", "pass"]
        assert sorted({r["index"] for r in rows}) == ["0", "1", "2", "3"]
        assert [float(r["C"]) for r in rows if r["name"] == "var_min"] == [20, 80, 140, 200]
        for i in range(4):
            assert (out_dir / f"point_{i:03d}.csv").exists()

    def test_sweep_needs_grid(self, tmp_path):
        code = cli.main(["sweep", "--config", _write(tmp_path, WRITE), "--key", "C",
                         "--out-dir", str(tmp_path / "x")])
        assert code == 2

    def test_sweep_deterministic(self, tmp_path):
        text = WRITE.replace("gamma0 = 0.001", "gamma0 = 0:0.002:3")
        path = _write(tmp_path, text)
        for d in ("a", "b"):
            cli.main(["sweep", "--config", path, "--key", "gamma0", "--out-dir",
                      str(tmp_path / d), "--workers", "3"])
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
