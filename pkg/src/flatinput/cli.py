"""Command-line front end.

    flatinput run <scenario> [--sim-dt S] [--ctrl-dt S] [--duration S] [--out CSV]
    flatinput verify [--grid N] [--lo X3] [--hi X3]
    flatinput plot <csv> [--out SCRIPT]
    flatinput sweep <dir> [--jobs N]

Scenario files hold ``key = value`` lines; ``#`` starts a comment. Keys:
name, mode, sim_dt, ctrl_dt, duration, gains, x0, segment (repeatable),
output. Segments read ``hold T0 T1 VALUE`` or ``poly7 T0 T1 Y_FROM Y_TO``.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .control import FLAG_FAULT, DEFAULT_GAINS, ControllerGains, Hold, Poly7, ReferenceTrajectory
from .core import flat_input_residuals, observability_matrix, verify_flat_input
from .errors import ConfigError, GainsError, VerificationFailure
from .pendulum import flat_input_pendulum, pendulum_alpha, pendulum_system
from .sim import COLUMNS, MODES, SimConfig, SimulationTrace, run_closed_loop

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAULT = 3
EXIT_VERIFY = 4

SCENARIO_SUFFIX = ".scn"
_KEYS = {"name", "mode", "sim_dt", "ctrl_dt", "duration", "gains", "x0", "segment", "output"}
_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_PI_EXPR = re.compile(rf"^(?:({_NUMBER})\s*\*\s*)?(-?)pi(?:\s*/\s*({_NUMBER}))?$")


def parse_number(text: str, line: Optional[int] = None) -> float:
    """Parse a finite float; ``pi``, ``pi/2``, ``2*pi/3`` are also accepted."""
    s = text.strip()
    if re.fullmatch(_NUMBER, s):
        return float(s)
    m = _PI_EXPR.match(s)
    if m:
        value = math.pi * (float(m.group(1)) if m.group(1) else 1.0)
        if m.group(2):
            value = -value
        if m.group(3):
            den = float(m.group(3))
            if den == 0.0:
                raise ConfigError(f"division by zero in {text!r}", line)
            value /= den
        return value
    raise ConfigError(f"not a number: {text!r}", line)


def _parse_list(text: str, line: int, length: int) -> Tuple[float, ...]:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if len(parts) != length:
        raise ConfigError(f"expected {length} numbers, got {len(parts)}", line)
    return tuple(parse_number(p, line) for p in parts)


def _parse_segment(text: str, line: int):
    parts = text.split()
    if not parts:
        raise ConfigError("empty segment", line)
    kind, args = parts[0], parts[1:]
    if kind == "hold":
        if len(args) != 3:
            raise ConfigError("hold needs: T0 T1 VALUE", line)
        return Hold(*(parse_number(a, line) for a in args))
    if kind == "poly7":
        if len(args) != 4:
            raise ConfigError("poly7 needs: T0 T1 Y_FROM Y_TO", line)
        return Poly7(*(parse_number(a, line) for a in args))
    raise ConfigError(f"unknown segment kind {kind!r} (expected hold or poly7)", line)


@dataclass
class Scenario:
    name: str = "scenario"
    mode: str = "feedback"
    sim_dt: float = 0.01
    ctrl_dt: float = 0.1
    duration: float = 20.0
    gains: Tuple[float, ...] = DEFAULT_GAINS
    x0: Tuple[float, ...] = (1.0, 0.0, math.pi / 2)
    segments: List = field(default_factory=list)
    output: Optional[Path] = None

    def to_config(self) -> SimConfig:
        try:
            gains = ControllerGains(self.gains)
            traj = ReferenceTrajectory(tuple(self.segments)) if self.segments else None
            return SimConfig(
                sim_dt=self.sim_dt,
                ctrl_dt=self.ctrl_dt,
                duration=self.duration,
                x0=self.x0,
                gains=gains,
                mode=self.mode,
                trajectory=traj,
            )
        except (ValueError, GainsError) as exc:
            raise ConfigError(str(exc)) from exc


def parse_scenario(text: str, base_dir: Optional[Path] = None) -> Scenario:
    sc = Scenario()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key != "segment" and key in seen:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        seen.add(key)
        if key == "name":
            sc.name = value
        elif key == "mode":
            if value not in MODES:
                raise ConfigError(f"mode must be one of {MODES}", lineno)
            sc.mode = value
        elif key in ("sim_dt", "ctrl_dt", "duration"):
            setattr(sc, key, parse_number(value, lineno))
        elif key == "gains":
            sc.gains = _parse_list(value, lineno, 3)
        elif key == "x0":
            sc.x0 = _parse_list(value, lineno, 3)
        elif key == "segment":
            sc.segments.append(_parse_segment(value, lineno))
        elif key == "output":
            path = Path(value)
            sc.output = path if path.is_absolute() or base_dir is None else base_dir / path
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    sc = parse_scenario(text, base_dir=path.parent)
    if sc.output is None:
        sc.output = path.with_suffix(".csv")
    return sc


def _fmt(v: float) -> str:
    return "%.17g" % v


def write_trace_csv(trace: SimulationTrace, path) -> None:
    flags_col = COLUMNS.index("flags")
    lines = [",".join(COLUMNS)]
    for row in trace.data:
        cells = [_fmt(v) for v in row]
        cells[flags_col] = str(int(row[flags_col]))
        lines.append(",".join(cells))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv_table(path) -> Tuple[List[str], np.ndarray]:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ConfigError(f"{path}: empty file")
    header = lines[0].split(",")
    rows = [[float(c) for c in ln.split(",")] for ln in lines[1:]]
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def read_trace_csv(path) -> SimulationTrace:
    header, data = read_csv_table(path)
    if tuple(header) != COLUMNS:
        raise ConfigError(f"{path}: header {header} does not match {list(COLUMNS)}")
    fault_rows = np.nonzero(data[:, -1].astype(int) & FLAG_FAULT)[0] if data.size else []
    fault_time = float(data[fault_rows[0], 0]) if len(fault_rows) else None
    return SimulationTrace(data=data, fault="fault flag set" if fault_time is not None else None, fault_time=fault_time)


def _summary(name: str, trace: SimulationTrace) -> str:
    fault = f"{trace.fault} at t={trace.fault_time:.6g}" if trace.fault else "none"
    return (
        f"{name}: rows={len(trace)} max|e|={trace.max_abs_error:.6g} "
        f"final|e|={trace.final_abs_error:.6g} fault: {fault}"
    )


def run_scenario(sc: Scenario, out: Path) -> int:
    trace = run_closed_loop(sc.to_config())
    write_trace_csv(trace, out)
    print(_summary(sc.name, trace))
    return EXIT_FAULT if trace.fault else EXIT_OK


def cmd_run(args) -> int:
    try:
        sc = load_scenario(args.scenario)
        for key in ("sim_dt", "ctrl_dt", "duration"):
            if getattr(args, key) is not None:
                setattr(sc, key, getattr(args, key))
        sc.to_config()
    except ConfigError as exc:
        print(f"config error: {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else sc.output
    return run_scenario(sc, out)


def verification_grid(n: int, lo: float, hi: float) -> List[np.ndarray]:
    """``n`` states with ``x3`` spread over ``[lo, hi]`` and varied ``x1, x2``."""
    x3 = np.linspace(lo, hi, n)
    return [np.array([1.0 + 0.5 * math.sin(i), 0.3 * math.cos(i), a]) for i, a in enumerate(x3)]


def cmd_verify(args) -> int:
    if args.grid < 1:
        print("config error: --grid must be positive", file=sys.stderr)
        return EXIT_CONFIG
    if not (0.0 < args.lo <= args.hi < math.pi):
        print(f"config error: grid [{args.lo}, {args.hi}] is not inside (0, pi)", file=sys.stderr)
        return EXIT_CONFIG
    sys_ = pendulum_system()
    flat = flat_input_pendulum()
    grid = verification_grid(args.grid, args.lo, args.hi)
    shift = np.array([0.0, args.perturb, 0.0])

    def gamma(x):
        return flat.gamma(x) + shift

    worst_gamma = max(float(np.max(np.abs(gamma(x) - [0.0, 0.0, math.sin(x[2])]))) for x in grid)
    worst_det = max(abs(observability_matrix(sys_, x).det_q - math.sin(x[2])) for x in grid)
    worst = np.max([flat_input_residuals(sys_, gamma, pendulum_alpha, x) for x in grid], axis=0)
    print(f"grid: {args.grid} points, x3 in [{args.lo:.6g}, {args.hi:.6g}]")
    for k, r in enumerate(worst):
        print(f"  flat-input residual k={k}: {r:.3e}")
    print(f"  |gamma - (0, 0, sin x3)|: {worst_gamma:.3e}")
    print(f"  |det Q - sin x3|: {worst_det:.3e}")
    try:
        verify_flat_input(sys_, gamma, pendulum_alpha, grid, tol=args.tol)
    except VerificationFailure as exc:
        print(f"FAIL: {exc}")
        return EXIT_VERIFY
    if worst_gamma > 1e-12 or worst_det > 1e-12:
        print("FAIL: closed-form identities violated beyond 1e-12")
        return EXIT_VERIFY
    print("PASS")
    return EXIT_OK


PLOT_COLUMNS = ("t", "y", "yref", "u", "x3", "flags")

_PLOT_TEMPLATE = '''"""Plot {csv_name}: output vs reference, control input and rod angle."""
import csv

import matplotlib.pyplot as plt

CSV_PATH = {csv_path!r}
FAULT_TIME = {fault_time!r}

with open(CSV_PATH) as fh:
    rows = list(csv.DictReader(fh))
cols = {{name: [float(r[name]) for r in rows] for name in {columns!r}}}

fig, (ax_y, ax_u, ax_x3) = plt.subplots(3, 1, sharex=True, figsize=(8, 8))
ax_y.plot(cols["t"], cols["yref"], "k--", label="y*")
ax_y.plot(cols["t"], cols["y"], label="y")
ax_y.set_ylabel("y")
ax_y.legend()
ax_u.step(cols["t"], cols["u"], where="post")
ax_u.set_ylabel("u")
ax_x3.plot(cols["t"], cols["x3"])
ax_x3.set_ylabel("x3 [rad]")
ax_x3.set_xlabel("t [s]")
if FAULT_TIME is not None:
    for ax in (ax_y, ax_u, ax_x3):
        ax.axvline(FAULT_TIME, color="r", linestyle=":")
    ax_y.annotate("fault t=%g" % FAULT_TIME, xy=(FAULT_TIME, cols["y"][-1]), color="r")
fig.tight_layout()
plt.savefig({png_path!r})
plt.show()
'''


def make_plot_script(csv_path) -> str:
    """Source of a matplotlib script drawing (y, y*), u and x3 against t."""
    csv_path = Path(csv_path)
    header, data = read_csv_table(csv_path)
    missing = [c for c in PLOT_COLUMNS if c not in header]
    if missing:
        raise ConfigError(f"{csv_path}: missing columns: {', '.join(missing)}")
    if data.shape[0] == 0:
        raise ConfigError(f"{csv_path}: no data rows")
    flags = data[:, header.index("flags")].astype(int)
    faults = np.nonzero(flags & FLAG_FAULT)[0]
    fault_time = float(data[faults[0], header.index("t")]) if faults.size else None
    return _PLOT_TEMPLATE.format(
        csv_name=csv_path.name,
        csv_path=str(csv_path),
        fault_time=fault_time,
        columns=PLOT_COLUMNS,
        png_path=str(csv_path.with_suffix(".png")),
    )


def cmd_plot(args) -> int:
    try:
        script = make_plot_script(args.csv)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path(args.csv).with_name(Path(args.csv).stem + "_plot.py")
    out.write_text(script)
    print(f"wrote {out}")
    return EXIT_OK


def _sweep_one(path: str) -> Tuple[str, int]:
    try:
        sc = load_scenario(path)
        sc.to_config()
    except ConfigError as exc:
        print(f"config error: {path}: {exc}", file=sys.stderr)
        return path, EXIT_CONFIG
    return path, run_scenario(sc, sc.output)


def cmd_sweep(args) -> int:
    paths = sorted(str(p) for p in Path(args.dir).glob(f"*{SCENARIO_SUFFIX}"))
    if not paths:
        print(f"config error: no *{SCENARIO_SUFFIX} files in {args.dir}", file=sys.stderr)
        return EXIT_CONFIG
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(_sweep_one, paths))
    codes = [code for _, code in results]
    if EXIT_CONFIG in codes:
        return EXIT_CONFIG
    return max(codes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flatinput", description="Flat-input tracking control of the variable-length pendulum.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario and write its CSV trace")
    p.add_argument("scenario")
    p.add_argument("--sim-dt", dest="sim_dt", type=float)
    p.add_argument("--ctrl-dt", dest="ctrl_dt", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="check the pendulum flat-input identities on a grid")
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--lo", type=float, default=0.2)
    p.add_argument("--hi", type=float, default=math.pi - 0.2)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="emit a matplotlib script for a CSV trace")
    p.add_argument("csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("sweep", help=f"run every *{SCENARIO_SUFFIX} file of a directory in parallel")
    p.add_argument("dir")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
