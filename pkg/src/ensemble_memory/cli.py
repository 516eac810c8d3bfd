"""Command-line front end: ``run``, ``sweep`` and ``validate``.

Exit codes: 0 all tolerances pass, 1 tolerance failure, 2 configuration
error, 3 numeric failure.  Regime warnings go to stderr only.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import Grid, RunConfig, parse_config
from .errors import ConfigurationError, NumericalError, UndefinedQuantityError
from .model import InputFieldSpec
from .protocols import ScenarioReport, run_epr, run_repeater, run_store_readout, run_write

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
UNITS_LINE = "# units: gamma = 1 (rates in gamma, times in 1/gamma)"
SCALAR_HEADER = ("name", "numeric", "analytic", "rel_dev", "pass")

log = logging.getLogger("ensemble_memory")


def fmt_number(x) -> str:
    """Fixed notation, 12 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    x = float(x)
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if x == 0:
        return f"{0.0:.11f}"
    decimals = max(0, 11 - math.floor(math.log10(abs(x))))
    return f"{x:.{decimals}f}"


def run_config(cfg: RunConfig) -> ScenarioReport:
    """Dispatch a validated config to the matching scenario."""
    params, mode = cfg.params(), cfg.mode()
    sc = cfg.scenario
    kind = cfg.scenario_type

    def opt(key):
        return float(sc[key]) if key in sc else None

    if kind == "write":
        grid = sc["omega_grid"].values() if "omega_grid" in sc else None
        return run_write(params, mode, cfg.input_field(), opt("duration"), dt=opt("dt"),
                         omega_grid=grid)
    if kind == "store_readout":
        return run_store_readout(params, mode, cfg.input_field(), float(sc["t_write"]),
                                 float(sc["t_store"]), float(sc["t_read"]),
                                 filter_rate=opt("filter_rate"), dt=opt("dt"))
    if kind == "epr":
        field = (InputFieldSpec.epr(float(sc["i_f"])) if "i_f" in sc
                 else InputFieldSpec.squeezed(float(sc["r"])))
        return run_epr(params, mode, field, opt("duration"), dt=opt("dt"))
    if kind == "repeater":
        r1 = (float(sc["r1"]) if "r1" in sc
              else -0.5 * math.log(1.0 - float(sc["spin1_squeezing"])))
        grid = sc["t_grid"].values() if "t_grid" in sc else None
        return run_repeater(params, mode, r1, grid, rate_ratio=float(sc.get("rate_ratio", 1.0)),
                            link=float(sc.get("link", 1.0)))
    raise ConfigurationError(f"unknown scenario type {kind!r}")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _csv(header, rows) -> str:
    lines = [UNITS_LINE, ",".join(header)]
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def scalar_rows(report: ScenarioReport) -> list[list[str]]:
    return [[c.name, fmt_number(c.numeric), fmt_number(c.analytic), fmt_number(c.rel_dev),
             "pass" if c.passed else "fail"] for c in report.comparisons]


def report_to_json(report: ScenarioReport, cfg: RunConfig) -> str:
    def clean(v):
        if isinstance(v, dict):
            return {str(k): clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.ndarray):
            return [clean(x) for x in v.tolist()]
        if isinstance(v, (bool, np.bool_)):
            return bool(v)
        if isinstance(v, (int, float, np.integer, np.floating)):
            f = float(v)
            return f if math.isfinite(f) else None
        return v

    doc = {
        "scenario": report.label,
        "units": "gamma = 1",
        "passed": report.passed,
        "config": cfg.echo(),
        "parameters": report.parameters,
        "numeric": report.numeric,
        "analytic": report.analytic,
        "comparisons": [c.as_dict() for c in report.comparisons],
        "series": report.series,
        "warnings": report.warnings,
    }
    return json.dumps(clean(doc), indent=2, sort_keys=True) + "\n"


def emit(report: ScenarioReport, cfg: RunConfig, out: Path, fmt: str) -> list[Path]:
    """Write the report; CSV gets sibling ``<stem>_<series>.csv`` files."""
    if fmt == "json":
        _write_text(out, report_to_json(report, cfg))
        return [out]
    _write_text(out, _csv(SCALAR_HEADER, scalar_rows(report)))
    written = [out]
    for name, cols in report.series.items():
        header = list(cols)
        data = np.column_stack([np.asarray(cols[h], float) for h in header])
        path = out.with_name(f"{out.stem}_{name}{out.suffix or '.csv'}")
        _write_text(path, _csv(header, ([fmt_number(x) for x in row] for row in data)))
        written.append(path)
    return written


def _resolve_output(cfg: RunConfig, out: str | None, fmt: str | None) -> tuple[Path, str]:
    fmt = fmt or cfg.output.get("format") or (
        "json" if out and out.endswith(".json") else "csv")
    path = out or cfg.output.get("path") or f"{cfg.scenario_type}.{fmt}"
    return Path(path), str(fmt)


def run_and_emit(cfg: RunConfig, out: str | None = None, fmt: str | None = None) -> int:
    """Run one scenario, write its files and return the exit status."""
    report = run_config(cfg)
    path, fmt = _resolve_output(cfg, out, fmt)
    emit(report, cfg, path, fmt)
    return EXIT_OK if report.passed else EXIT_TOLERANCE


def _load(path: str, grid_key: str | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, grid_key=grid_key)


def expand_sweep(cfg: RunConfig, key: str) -> tuple[str, np.ndarray, list[RunConfig]]:
    for section, vals in cfg.sections.items():
        if isinstance(vals.get(key), Grid):
            values = vals[key].values()
            points = [cfg.replace(section, key, float(v)) for v in values]
            return section, values, points
    raise ConfigurationError(f"sweep key '{key}' not found")


def sweep(cfg: RunConfig, key: str, out_dir: Path, fmt: str = "csv",
          max_workers: int | None = None) -> int:
    """Run every grid point, write per-point files and ``summary.csv``."""
    _, values, points = expand_sweep(cfg, key)
    for p in points:
        p.params()  # surface configuration errors before any work

    def one(item):
        i, p = item
        report = run_config(p)
        emit(report, p, out_dir / f"point_{i:03d}.{fmt}", fmt)
        return report

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        reports = list(pool.map(one, enumerate(points)))

    rows = []
    for i, (v, rep) in enumerate(zip(values, reports)):
        rows.extend([str(i), fmt_number(v), *row] for row in scalar_rows(rep))
    _write_text(out_dir / "summary.csv", _csv(("index", key, *SCALAR_HEADER), rows))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_TOLERANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ensemble-memory",
                                     description="Cavity-ensemble quantum memory scenarios.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"))

    p = sub.add_parser("sweep", help="expand a grid key into per-point runs")
    p.add_argument("--config", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("validate", help="parse and check a config")
    p.add_argument("--config", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.WARNING)
    try:
        if args.command == "validate":
            cfg = _load(args.config)
            print(f"ok: {cfg.scenario_type} scenario, {cfg.style} parameters")
            return EXIT_OK
        if args.command == "run":
            return run_and_emit(_load(args.config), args.out, args.format)
        cfg = _load(args.config, grid_key=args.key)
        return sweep(cfg, args.key, Path(args.out_dir), args.format, args.workers)
    except (ConfigurationError, UndefinedQuantityError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        log.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
