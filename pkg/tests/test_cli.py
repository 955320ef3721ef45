import math
import re

import numpy as np
import pytest

from flatinput.cli import (
    EXIT_CONFIG,
    EXIT_FAULT,
    EXIT_OK,
    EXIT_VERIFY,
    load_scenario,
    main,
    make_plot_script,
    parse_number,
    parse_scenario,
    read_trace_csv,
    write_trace_csv,
)
from flatinput.control import FLAG_FAULT, Poly7
from flatinput.errors import ConfigError
from flatinput.sim import COLUMNS, run_closed_loop

EQUILIBRIUM = """\
# ball at rest with the rod horizontal
name = equilibrium
duration = 5
x0 = 1, 0, pi/2
segment = hold 0 5 1
"""

FAULTING = """\
name = too-fast
duration = 5
segment = poly7 0 5 1 2
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParseNumber:
    @pytest.mark.parametrize(
        "text, value",
        [("1", 1.0), ("-2.5e-3", -2.5e-3), (".5", 0.5), ("pi", math.pi), ("pi/2", math.pi / 2),
         ("2*pi/3", 2 * math.pi / 3), ("-pi", -math.pi)],
    )
    def test_accepts(self, text, value):
        assert parse_number(text) == value

    @pytest.mark.parametrize("text", ["", "nan", "inf", "1.0x", "0x10", "pi/0", "1,5"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_number(text)


class TestScenarioParser:
    def test_defaults(self):
        cfg = parse_scenario("").to_config()
        assert (cfg.sim_dt, cfg.ctrl_dt, cfg.duration) == (0.01, 0.1, 20.0)
        assert cfg.gains.lambdas == (2.0, 6.0, 4.0)
        assert cfg.x0 == (1.0, 0.0, math.pi / 2)

    def test_segments(self):
        sc = parse_scenario("segment = poly7 0 4 1 0.5\nsegment = hold 4 20 0.5\n")
        assert sc.segments[0] == Poly7(0, 4, 1, 0.5)
        assert sc.to_config().trajectory.segments[-1].y_end == 0.5

    @pytest.mark.parametrize(
        "text, line",
        [
            ("name = a\ngians = 2 6 4\n", 2),
            ("duration = 5\nduration = 6\n", 2),
            ("\n\nsim_dt = fast\n", 3),
            ("mode = open\n", 1),
            ("x0 = 1 0\n", 1),
            ("segment = ramp 0 1 2\n", 1),
            ("just words\n", 1),
        ],
    )
    def test_line_numbered_errors(self, text, line):
        with pytest.raises(ConfigError) as info:
            parse_scenario(text)
        assert info.value.line == line
        assert str(info.value).startswith(f"line {line}:")

    def test_unstable_gains(self):
        with pytest.raises(ConfigError):
            parse_scenario("gains = 2 -6 4\n").to_config()

    def test_output_relative_to_scenario(self, tmp_path):
        path = write(tmp_path, "a.scn", "output = traces/a.csv\n")
        assert load_scenario(path).output == tmp_path / "traces" / "a.csv"
        assert load_scenario(write(tmp_path, "b.scn", "")).output == tmp_path / "b.csv"


class TestRun:
    def test_equilibrium(self, tmp_path, capsys):
        scn = write(tmp_path, "eq.scn", EQUILIBRIUM)
        assert main(["run", str(scn)]) == EXIT_OK
        trace = read_trace_csv(tmp_path / "eq.csv")
        assert np.max(np.abs(trace["e"])) < 1e-6
        out = capsys.readouterr().out
        assert out.startswith("equilibrium: rows=501 max|e|=") and "fault: none" in out

    def test_malformed_key(self, tmp_path, capsys):
        scn = write(tmp_path, "bad.scn", "name = bad\ngians = 2 6 4\n")
        assert main(["run", str(scn)]) == EXIT_CONFIG
        assert not (tmp_path / "bad.csv").exists()
        assert "line 2" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.scn")]) == EXIT_CONFIG

    def test_byte_identical(self, tmp_path):
        scn = write(tmp_path, "s.scn", "duration = 4\nx0 = 1.02 0 pi/2\nsegment = hold 0 4 1\n")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["run", str(scn), "--out", str(a)]) == EXIT_OK
        assert main(["run", str(scn), "--out", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_csv_format(self, tmp_path):
        scn = write(tmp_path, "s.scn", "duration = 1\nx0 = 1.02 0 pi/2\n")
        main(["run", str(scn)])
        raw = (tmp_path / "s.csv").read_bytes()
        assert b"\r" not in raw
        lines = raw.decode().splitlines()
        assert lines[0] == ",".join(COLUMNS)
        assert lines[1].split(",")[-1] == "0"

    def test_round_trip(self, tmp_path):
        sc = parse_scenario("duration = 3\nx0 = 1.02 0.01 1.5\n")
        trace = run_closed_loop(sc.to_config())
        write_trace_csv(trace, tmp_path / "t.csv")
        np.testing.assert_array_equal(read_trace_csv(tmp_path / "t.csv").data, trace.data)

    def test_overrides(self, tmp_path):
        scn = write(tmp_path, "s.scn", EQUILIBRIUM)
        out = tmp_path / "o.csv"
        assert main(["run", str(scn), "--duration", "1", "--sim-dt", "0.005", "--ctrl-dt", "0.05", "--out", str(out)]) == EXIT_OK
        trace = read_trace_csv(out)
        assert len(trace) == 201
        assert trace["t"][1] == 0.005

    def test_bad_override(self, tmp_path):
        scn = write(tmp_path, "s.scn", EQUILIBRIUM)
        assert main(["run", str(scn), "--ctrl-dt", "0.025"]) == EXIT_CONFIG

    def test_fault_keeps_partial_trace(self, tmp_path, capsys):
        scn = write(tmp_path, "f.scn", FAULTING)
        assert main(["run", str(scn)]) == EXIT_FAULT
        trace = read_trace_csv(tmp_path / "f.csv")
        assert 1 < len(trace) < 501
        assert trace.flags[-1] & FLAG_FAULT
        assert "left (0, pi)" in capsys.readouterr().out


class TestVerify:
    def test_default_grid_passes(self, capsys):
        assert main(["verify"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "grid: 100 points" in out and out.rstrip().endswith("PASS")

    def test_grid_touching_singularity(self, capsys):
        assert main(["verify", "--lo", "0"]) == EXIT_CONFIG
        assert "(0, pi)" in capsys.readouterr().err

    def test_perturbed_gamma(self, capsys):
        assert main(["verify", "--perturb", "1e-6"]) == EXIT_VERIFY
        assert "k=1" in capsys.readouterr().out


class TestPlot:
    def test_valid_trace(self, tmp_path):
        scn = write(tmp_path, "eq.scn", EQUILIBRIUM)
        main(["run", str(scn)])
        assert main(["plot", str(tmp_path / "eq.csv")]) == EXIT_OK
        script = (tmp_path / "eq_plot.py").read_text()
        compile(script, "eq_plot.py", "exec")
        for col in ("t", "y", "yref", "u", "x3", "flags"):
            assert repr(col) in script
        assert "FAULT_TIME = None" in script

    def test_columns_referenced_exist(self, tmp_path):
        scn = write(tmp_path, "eq.scn", EQUILIBRIUM)
        main(["run", str(scn)])
        script = make_plot_script(tmp_path / "eq.csv")
        used = set(re.findall(r'cols\["(\w+)"\]', script))
        assert used <= set(COLUMNS)

    def test_empty_csv(self, tmp_path, capsys):
        csv = write(tmp_path, "e.csv", ",".join(COLUMNS) + "\n")
        assert main(["plot", str(csv)]) == EXIT_CONFIG
        assert "no data rows" in capsys.readouterr().err

    def test_missing_columns(self, tmp_path, capsys):
        csv = write(tmp_path, "m.csv", "t,y\n0,1\n")
        assert main(["plot", str(csv)]) == EXIT_CONFIG
        assert "missing columns: yref, u, x3, flags" in capsys.readouterr().err

    def test_fault_annotation(self, tmp_path):
        scn = write(tmp_path, "f.scn", FAULTING)
        main(["run", str(scn)])
        trace = read_trace_csv(tmp_path / "f.csv")
        script = make_plot_script(tmp_path / "f.csv")
        assert f"FAULT_TIME = {trace.fault_time!r}" in script
        assert "axvline" in script


def test_sweep(tmp_path):
    write(tmp_path, "a.scn", EQUILIBRIUM)
    write(tmp_path, "b.scn", "duration = 2\nx0 = 1.02 0 pi/2\nsegment = hold 0 2 1\n")
    assert main(["sweep", str(tmp_path), "--jobs", "2"]) == EXIT_OK
    assert (tmp_path / "a.csv").exists() and (tmp_path / "b.csv").exists()


def test_sweep_reports_fault(tmp_path):
    write(tmp_path, "a.scn", EQUILIBRIUM)
    write(tmp_path, "f.scn", FAULTING)
    assert main(["sweep", str(tmp_path), "--jobs", "2"]) == EXIT_FAULT


def test_sweep_empty_dir(tmp_path):
    assert main(["sweep", str(tmp_path)]) == EXIT_CONFIG
