"""Sectioned ``key = value`` run configuration.

Format::

    # comment
    [system]
    C = 100            # derived style: C with gamma_pump or gamma_eff
    gamma_eff = 0.075
    gamma0 = 0.001
    kappa = 10

    [mode]
    type = EIT

    [scenario]
    type = write
    R_in = 0.5

    [output]
    path = write.csv
    format = csv

All rates are in units of ``gamma`` (fixed to 1) and times in ``1/gamma``.
Grid values use ``start:stop:count`` (inclusive, evenly spaced).  The parser
keeps line numbers so every diagnostic points at the offending line.

``configparser`` is not used because it drops per-key line numbers and
accepts constructs (continuations, interpolation) that are not part of
this format.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .model import InputFieldSpec, InteractionMode, SystemParams

RAW_KEYS = {"g", "n_atoms", "tau", "omega_rabi"}
DERIVED_KEYS = {"C", "gamma_pump", "gamma_eff"}
COMMON_SYSTEM_KEYS = {"kappa", "gamma0", "gamma"}

SCENARIO_KEYS = {
    "write": {"r", "R_in", "angle", "duration", "dt", "omega_grid"},
    "store_readout": {"r", "R_in", "angle", "t_write", "t_store", "t_read", "filter_rate", "dt"},
    "epr": {"i_f", "r", "duration", "dt"},
    "repeater": {"r1", "spin1_squeezing", "t_grid", "rate_ratio", "link"},
}
GRID_KEYS = {"omega_grid", "t_grid"}
STRING_KEYS = {("mode", "type"), ("scenario", "type"), ("output", "path"), ("output", "format")}
SECTIONS = ("system", "mode", "scenario", "output")

_SECTION_RE = re.compile(r"^\[([A-Za-z_][A-Za-z0-9_]*)\]$")
_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


class ConfigError(ConfigurationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Grid:
    start: float
    stop: float
    count: int

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.count)

    def __str__(self) -> str:
        return f"{_fmt_value(self.start)}:{_fmt_value(self.stop)}:{self.count}"


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_number(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}", line) from None
    if not math.isfinite(value):
        raise ConfigError(f"value must be finite, got {text!r}", line)
    return value


def _parse_grid(text: str, line: int) -> Grid:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must be start:stop:count, got {text!r}", line)
    start, stop = _parse_number(parts[0], line), _parse_number(parts[1], line)
    count = _parse_number(parts[2], line)
    if count < 1 or count != int(count):
        raise ConfigError("grid count must be a positive integer", line)
    if stop < start:
        raise ConfigError("grid stop must not be below start", line)
    return Grid(start, stop, int(count))


@dataclass
class RunConfig:
    """Validated configuration; ``sections`` holds parsed values, ``lines`` their line numbers."""

    sections: dict[str, dict[str, object]]
    lines: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def system(self) -> dict:
        return self.sections["system"]

    @property
    def mode_section(self) -> dict:
        return self.sections["mode"]

    @property
    def scenario(self) -> dict:
        return self.sections["scenario"]

    @property
    def output(self) -> dict:
        return self.sections.get("output", {})

    @property
    def scenario_type(self) -> str:
        return str(self.scenario["type"])

    @property
    def style(self) -> str:
        return "derived" if DERIVED_KEYS & set(self.system) else "raw"

    def echo(self) -> dict:
        return {s: {k: (str(v) if isinstance(v, Grid) else v) for k, v in vals.items()}
                for s, vals in self.sections.items()}

    def to_text(self) -> str:
        out = []
        for s, vals in self.sections.items():
            out.append(f"[{s}]")
            out.extend(f"{k} = {_fmt_value(v)}" for k, v in vals.items())
            out.append("")
        return "\n".join(out)

    def mode(self) -> InteractionMode:
        kind = self.mode_section["type"]
        if kind == "EIT":
            return InteractionMode.eit()
        return InteractionMode.raman(float(self.mode_section["detuning"]))

    def params(self) -> SystemParams:
        s = self.system
        mode = self.mode()
        gamma0 = float(s["gamma0"])
        if self.style == "derived":
            gp = float(s["gamma_pump"]) if "gamma_pump" in s else float(s["gamma_eff"]) - gamma0
            return SystemParams.from_rates(float(s["C"]), gp, mode, kappa=float(s["kappa"]),
                                           gamma0=gamma0)
        d = mode.detuning
        return SystemParams(g=float(s["g"]), n_atoms=float(s["n_atoms"]),
                            omega_rabi=float(s["omega_rabi"]), gamma=1.0, gamma0=gamma0,
                            kappa=float(s["kappa"]), tau=float(s["tau"]), delta1=d, delta2=d)

    def input_field(self) -> InputFieldSpec:
        sc = self.scenario
        angle = float(sc.get("angle", 0.0))
        if "R_in" in sc:
            return InputFieldSpec.from_noise_reduction(float(sc["R_in"]), angle)
        r = float(sc.get("r", 0.0))
        if r == 0.0:
            return InputFieldSpec.vacuum()
        return InputFieldSpec.squeezed(r, angle)

    def replace(self, section: str, key: str, value) -> "RunConfig":
        sections = {s: dict(v) for s, v in self.sections.items()}
        sections[section][key] = value
        return RunConfig(sections, dict(self.lines))


def parse_config(text: str, *, grid_key: str | None = None) -> RunConfig:
    """Parse and validate configuration text.

    ``grid_key`` names one extra key that may carry a ``start:stop:count``
    grid (used by the sweep command).
    """
    sections: dict[str, dict[str, object]] = {}
    lines: dict[tuple[str, str], int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        m = _SECTION_RE.match(stripped)
        if m:
            current = m.group(1)
            if current not in SECTIONS:
                raise ConfigError(f"unknown section [{current}]", lineno)
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", lineno)
            sections[current] = {}
            continue
        m = _KEY_RE.match(stripped)
        if not m:
            raise ConfigError(f"cannot parse {raw.strip()!r}", lineno)
        if current is None:
            raise ConfigError("key outside of any section", lineno)
        key, text_value = m.group(1), m.group(2).strip()
        if not text_value:
            raise ConfigError(f"missing value for '{key}'", lineno)
        if key in sections[current]:
            raise ConfigError(f"duplicate key '{key}' in [{current}]", lineno)
        if (current, key) in STRING_KEYS:
            value: object = text_value
        elif key in GRID_KEYS or (key == grid_key and ":" in text_value):
            value = _parse_grid(text_value, lineno)
        else:
            value = _parse_number(text_value, lineno)
        sections[current][key] = value
        lines[(current, key)] = lineno
    cfg = RunConfig(sections, lines)
    _validate(cfg, grid_key)
    return cfg


def _line(cfg: RunConfig, section: str, key: str | None = None) -> int | None:
    if key is not None:
        return cfg.lines.get((section, key))
    ls = [n for (s, _), n in cfg.lines.items() if s == section]
    return min(ls) if ls else None


def _validate(cfg: RunConfig, grid_key: str | None) -> None:
    if "system" not in cfg.sections:
        raise ConfigError("missing section [system]")
    sysv = cfg.system
    keys = set(sysv)

    unknown = keys - RAW_KEYS - DERIVED_KEYS - COMMON_SYSTEM_KEYS
    for k in sorted(unknown):
        raise ConfigError(f"unknown key '{k}' in [system]", _line(cfg, "system", k))
    if keys & RAW_KEYS and keys & DERIVED_KEYS:
        k = sorted(keys & DERIVED_KEYS)[0]
        raise ConfigError("conflicting parameter styles: raw (g, n_atoms, tau, omega_rabi) "
                          "and derived (C, gamma_pump, gamma_eff) keys both present",
                          _line(cfg, "system", k))
    for k in ("kappa", "gamma0"):
        if k not in sysv:
            raise ConfigError(f"missing key '{k}' in [system]", _line(cfg, "system"))
    if "gamma" in sysv and sysv["gamma"] != 1.0:
        raise ConfigError("gamma is the unit and must equal 1", _line(cfg, "system", "gamma"))
    if cfg.style == "derived":
        if "C" not in sysv:
            raise ConfigError("derived style requires 'C'", _line(cfg, "system"))
        if ("gamma_pump" in sysv) == ("gamma_eff" in sysv):
            raise ConfigError("derived style requires exactly one of gamma_pump, gamma_eff",
                              _line(cfg, "system"))
    else:
        for k in sorted(RAW_KEYS):
            if k not in sysv:
                raise ConfigError(f"raw style requires '{k}'", _line(cfg, "system"))

    def positive(k, strict=True):
        if k in sysv and not isinstance(sysv[k], Grid):
            v = sysv[k]
            if (v <= 0) if strict else (v < 0):
                op = ">" if strict else ">="
                raise ConfigError(f"'{k}' must be {op} 0, got {v:g}", _line(cfg, "system", k))

    positive("kappa")
    positive("tau")
    positive("C", strict=False)
    positive("gamma0", strict=False)
    positive("gamma_pump", strict=False)
    positive("g", strict=False)
    positive("omega_rabi", strict=False)
    if "n_atoms" in sysv and not isinstance(sysv["n_atoms"], Grid) and sysv["n_atoms"] < 1:
        raise ConfigError("'n_atoms' must be >= 1", _line(cfg, "system", "n_atoms"))
    if ("gamma_eff" in sysv and not isinstance(sysv["gamma_eff"], Grid)
            and not isinstance(sysv["gamma0"], Grid) and sysv["gamma_eff"] < sysv["gamma0"]):
        raise ConfigError("'gamma_eff' must be >= gamma0", _line(cfg, "system", "gamma_eff"))

    for s in ("mode", "scenario"):
        if s not in cfg.sections:
            raise ConfigError(f"missing section [{s}]")
    mode = cfg.mode_section
    for k in sorted(set(mode) - {"type", "detuning"}):
        raise ConfigError(f"unknown key '{k}' in [mode]", _line(cfg, "mode", k))
    if "type" not in mode:
        raise ConfigError("missing key 'type' in [mode]", _line(cfg, "mode"))
    if mode["type"] not in ("EIT", "Raman"):
        raise ConfigError(f"mode type must be EIT or Raman, got {mode['type']!r}",
                          _line(cfg, "mode", "type"))
    if mode["type"] == "Raman" and "detuning" not in mode:
        raise ConfigError("Raman mode requires 'detuning'", _line(cfg, "mode", "type"))
    if mode["type"] == "EIT" and "detuning" in mode:
        raise ConfigError("EIT mode takes no detuning", _line(cfg, "mode", "detuning"))

    sc = cfg.scenario
    if "type" not in sc:
        raise ConfigError("missing key 'type' in [scenario]", _line(cfg, "scenario"))
    st = sc["type"]
    if st not in SCENARIO_KEYS:
        raise ConfigError(f"unknown scenario type {st!r}", _line(cfg, "scenario", "type"))
    for k in sorted(set(sc) - SCENARIO_KEYS[st] - {"type"}):
        raise ConfigError(f"unknown key '{k}' for scenario '{st}'", _line(cfg, "scenario", k))
    if "r" in sc and "R_in" in sc:
        raise ConfigError("give either r or R_in, not both", _line(cfg, "scenario", "R_in"))
    if "r1" in sc and "spin1_squeezing" in sc:
        raise ConfigError("give either r1 or spin1_squeezing, not both",
                          _line(cfg, "scenario", "spin1_squeezing"))
    if st == "epr" and ("i_f" in sc) == ("r" in sc):
        raise ConfigError("epr scenario needs exactly one of i_f, r", _line(cfg, "scenario"))
    if st == "store_readout":
        for k in ("t_write", "t_store", "t_read"):
            if k not in sc:
                raise ConfigError(f"store_readout requires '{k}'", _line(cfg, "scenario"))
    if st == "repeater" and "r1" not in sc and "spin1_squeezing" not in sc:
        raise ConfigError("repeater requires r1 or spin1_squeezing", _line(cfg, "scenario"))
    for k, v in sc.items():
        if k == "type" or isinstance(v, Grid):
            continue
        bad = None
        if k in ("R_in", "spin1_squeezing") and not 0 <= v < 1:
            bad = "must lie in [0, 1)"
        elif k == "i_f" and not 0 < v <= 2:
            bad = "must lie in (0, 2]"
        elif k == "link" and not 0 <= v <= 1:
            bad = "must lie in [0, 1]"
        elif k in ("duration", "dt", "t_write", "t_read", "rate_ratio") and v <= 0:
            bad = "must be > 0"
        elif k in ("r", "r1", "t_store", "filter_rate") and v < 0:
            bad = "must be >= 0"
        if bad:
            raise ConfigError(f"'{k}' {bad}, got {v:g}", _line(cfg, "scenario", k))

    out = cfg.output
    for k in sorted(set(out) - {"path", "format"}):
        raise ConfigError(f"unknown key '{k}' in [output]", _line(cfg, "output", k))
    if "format" in out and out["format"] not in ("csv", "json"):
        raise ConfigError("output format must be csv or json", _line(cfg, "output", "format"))

    if grid_key is not None:
        hits = [(s, k) for s, vals in cfg.sections.items() for k, v in vals.items()
                if k == grid_key and isinstance(v, Grid)]
        if not hits:
            raise ConfigError(f"sweep key '{grid_key}' with a start:stop:count grid not found")

    probe = cfg
    for section, vals in cfg.sections.items():
        for k, v in vals.items():
            if isinstance(v, Grid) and k not in GRID_KEYS:
                probe = probe.replace(section, k, float(v.start))
    try:
        probe.params()
    except ConfigError:
        raise
    except ConfigurationError as exc:
        raise ConfigError(str(exc), _line(cfg, "system")) from None
