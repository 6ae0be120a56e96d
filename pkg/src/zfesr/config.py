"""Experiment configuration: a declarative text format with explicit unit
suffixes, schema validation with file locations, and deterministic digests.

File format: INI-like sections with "key: value" lines and # comments.
Every physical quantity carries its unit in the key name (MHz, us, nm, G,
deg).  Unknown keys are rejected (with a suggestion when a known key is
close, which catches missing unit suffixes), duplicate keys are rejected
with both line numbers, and all schema errors are reported together.

    [nv]
    d_MHz: 2870
    t1rho_us: 70

    [target]
    electron_spin: 1/2
    nuclear_spin: 1/2
    a_principal_MHz: 114, 114, 159.9
    orientation_deg: 0, 0, 0

    [sequence]
    seg1: mw power_MHz=250 phase=y duration_us=0.001

Ranges are written start:stop:step ("2:400:1"); tables as comma-separated
x=y pairs ("50=72, 300=68").
"""

from __future__ import annotations

import difflib
import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import constants


class ConfigError(ValueError):
    """Validation failure(s) in an experiment config, one message per problem."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


# --- typed sections ---


@dataclass(frozen=True)
class NVSection:
    d_mhz: float = constants.NV_ZERO_FIELD_SPLITTING_MHZ
    gamma_mhz_per_g: float = constants.NV_GYROMAGNETIC_MHZ_PER_G
    t2star_us: float = 0.1
    t1rho_us: float = 70.0


@dataclass(frozen=True)
class TargetSection:
    electron_spin: float = 0.5
    nuclear_spin: float = 0.5
    a_principal_mhz: tuple = (constants.P1_15N_A_PERP_MHZ, constants.P1_15N_A_PERP_MHZ, constants.P1_15N_A_ZZ_MHZ)
    orientation_deg: tuple = (0.0, 0.0, 0.0)
    quadrupole_mhz: float = 0.0
    gamma_mhz_per_g: float = 2.803
    t2star_us: float = 0.1


@dataclass(frozen=True)
class CouplingSection:
    r_nm: float = 5.0
    direction: tuple = (0.0, 0.0, 1.0)
    c0_mhz_nm3: float = 52.0  # ordinary frequency; multiplied by 2*pi internally


@dataclass(frozen=True)
class SequenceSection:
    pulse_power_mhz: float = 250.0
    lock_power_mhz: float = 148.0
    tau_us: float = 10.0
    durations_us: tuple = (0.0, 0.05, 0.0005)
    segments: tuple = ()


@dataclass(frozen=True)
class SweepSection:
    axis_mhz: tuple = (2.0, 400.0, 1.0)
    tau_us: float = 10.0
    mode: str = "fast"
    weight_mode: str = "paper"
    fwhm_mhz: float = 8.0
    contrast: float | None = None
    t1rho_table_us: tuple | None = None


@dataclass(frozen=True)
class DeerSection:
    field_g: float = 300.0
    axis_mhz: tuple = (600.0, 1100.0, 1.0)


@dataclass(frozen=True)
class EnsembleSection:
    count: int = 1
    orientation: str = "fixed"
    orientations_deg: tuple = ((0.0, 0.0, 0.0),)
    radial: str = "fixed"
    r_nm: float = 5.0
    r_min_nm: float = 5.0
    r_max_nm: float = 15.0
    direction_rule: str = "fixed"
    direction: tuple = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class NoiseSection:
    repetitions: int = 0
    seed: int = 12345


@dataclass(frozen=True)
class BudgetSection:
    areal_density_nm2: float = 5.5e-3
    gamma_p1_per_us: float = 10.0
    tau_us: float = 10.0
    r0_nm: float = 15.0
    contrast: float = 0.03


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    format: str = "csv"


@dataclass(frozen=True)
class ExperimentConfig:
    nv: NVSection = field(default_factory=NVSection)
    target: TargetSection = field(default_factory=TargetSection)
    coupling: CouplingSection = field(default_factory=CouplingSection)
    sequence: SequenceSection = field(default_factory=SequenceSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    deer: DeerSection = field(default_factory=DeerSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    budget: BudgetSection = field(default_factory=BudgetSection)
    output: OutputSection = field(default_factory=OutputSection)

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


# --- value parsers ---


def _parse_float(text: str) -> float:
    v = float(text)
    if math.isnan(v) or math.isinf(v):
        raise ValueError("must be finite")
    return v


def _parse_int(text: str) -> int:
    if not re.fullmatch(r"[+-]?\d+", text.strip()):
        raise ValueError("must be an integer")
    return int(text)


def _parse_spin(text: str) -> float:
    table = {"1/2": 0.5, "1": 1.0, "3/2": 1.5}
    t = text.strip()
    if t not in table:
        raise ValueError("must be one of 1/2, 1, 3/2")
    return table[t]


def _parse_triple(text: str) -> tuple:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if len(parts) != 3:
        raise ValueError("must be three comma-separated numbers")
    return tuple(_parse_float(p) for p in parts)


def _parse_range(text: str) -> tuple:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("must be start:stop:step")
    start, stop, step = (_parse_float(p) for p in parts)
    if step <= 0 or stop <= start:
        raise ValueError("needs stop > start and step > 0")
    return (start, stop, step)


def _parse_table(text: str) -> tuple:
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise ValueError("table entries must look like power=value")
        x, y = chunk.split("=", 1)
        pairs.append((_parse_float(x), _parse_float(y)))
    if len(pairs) < 2:
        raise ValueError("table needs at least two entries")
    return tuple(pairs)


def _parse_triples(text: str) -> tuple:
    groups = [g.strip() for g in text.split(";") if g.strip()]
    if not groups:
        raise ValueError("must be semicolon-separated angle triples")
    return tuple(_parse_triple(g) for g in groups)


def _positive(v, name):
    if v <= 0:
        raise ValueError(f"{name} must be positive")
    return v


def _non_negative(v, name):
    if v < 0:
        raise ValueError(f"{name} must be non-negative")
    return v


def _enum(options):
    def check(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return t

    return check


# Schema: section -> key -> (dataclass field name, parser, validator or None).
_SCHEMA: dict[str, dict[str, tuple]] = {
    "nv": {
        "d_MHz": ("d_mhz", _parse_float, lambda v, n: _positive(v, n)),
        "gamma_MHz_per_G": ("gamma_mhz_per_g", _parse_float, None),
        "t2star_us": ("t2star_us", _parse_float, lambda v, n: _positive(v, n)),
        "t1rho_us": ("t1rho_us", _parse_float, lambda v, n: _positive(v, n)),
    },
    "target": {
        "electron_spin": ("electron_spin", _parse_spin, None),
        "nuclear_spin": ("nuclear_spin", _parse_spin, None),
        "a_principal_MHz": ("a_principal_mhz", _parse_triple, None),
        "orientation_deg": ("orientation_deg", _parse_triple, None),
        "quadrupole_MHz": ("quadrupole_mhz", _parse_float, None),
        "gamma_MHz_per_G": ("gamma_mhz_per_g", _parse_float, None),
        "t2star_us": ("t2star_us", _parse_float, lambda v, n: _positive(v, n)),
    },
    "coupling": {
        "r_nm": ("r_nm", _parse_float, lambda v, n: _positive(v, n)),
        "direction": ("direction", _parse_triple, None),
        "c0_MHz_nm3": ("c0_mhz_nm3", _parse_float, lambda v, n: _positive(v, n)),
    },
    "sequence": {
        "pulse_power_MHz": ("pulse_power_mhz", _parse_float, lambda v, n: _positive(v, n)),
        "lock_power_MHz": ("lock_power_mhz", _parse_float, lambda v, n: _positive(v, n)),
        "tau_us": ("tau_us", _parse_float, lambda v, n: _positive(v, n)),
        "durations_us": ("durations_us", _parse_range, None),
    },
    "sweep": {
        "axis_MHz": ("axis_mhz", _parse_range, None),
        "tau_us": ("tau_us", _parse_float, lambda v, n: _positive(v, n)),
        "mode": ("mode", _enum(("fast", "exact")), None),
        "weight_mode": ("weight_mode", _enum(("paper", "geometric")), None),
        "fwhm_MHz": ("fwhm_mhz", _parse_float, lambda v, n: _positive(v, n)),
        "contrast": ("contrast", _parse_float, lambda v, n: _in_unit_interval(v, n)),
        "t1rho_table_us": ("t1rho_table_us", _parse_table, None),
    },
    "deer": {
        "field_G": ("field_g", _parse_float, lambda v, n: _positive(v, n)),
        "axis_MHz": ("axis_mhz", _parse_range, None),
    },
    "ensemble": {
        "count": ("count", _parse_int, lambda v, n: _positive(v, n)),
        "orientation": ("orientation", _enum(("fixed", "random")), None),
        "orientations_deg": ("orientations_deg", _parse_triples, None),
        "radial": ("radial", _enum(("fixed", "annulus")), None),
        "r_nm": ("r_nm", _parse_float, lambda v, n: _positive(v, n)),
        "r_min_nm": ("r_min_nm", _parse_float, lambda v, n: _positive(v, n)),
        "r_max_nm": ("r_max_nm", _parse_float, lambda v, n: _positive(v, n)),
        "direction_rule": ("direction_rule", _enum(("fixed", "random")), None),
        "direction": ("direction", _parse_triple, None),
    },
    "noise": {
        "repetitions": ("repetitions", _parse_int, lambda v, n: _non_negative(v, n)),
        "seed": ("seed", _parse_int, None),
    },
    "budget": {
        "areal_density_nm2": ("areal_density_nm2", _parse_float, lambda v, n: _positive(v, n)),
        "gamma_p1_per_us": ("gamma_p1_per_us", _parse_float, lambda v, n: _positive(v, n)),
        "tau_us": ("tau_us", _parse_float, lambda v, n: _non_negative(v, n)),
        "r0_nm": ("r0_nm", _parse_float, lambda v, n: _positive(v, n)),
        "contrast": ("contrast", _parse_float, lambda v, n: _positive(v, n)),
    },
    "output": {
        "dir": ("dir", str.strip, None),
        "format": ("format", _enum(("csv", "json")), None),
    },
}

_SECTION_TYPES = {
    "nv": NVSection,
    "target": TargetSection,
    "coupling": CouplingSection,
    "sequence": SequenceSection,
    "sweep": SweepSection,
    "deer": DeerSection,
    "ensemble": EnsembleSection,
    "noise": NoiseSection,
    "budget": BudgetSection,
    "output": OutputSection,
}

_SEG_KEY = re.compile(r"seg(\d+)$")


def _in_unit_interval(v, name):
    if not 0.0 < v < 1.0:
        raise ValueError(f"{name} must lie strictly between 0 and 1")
    return v


def _parse_segment(value: str, where: str, errors: list[str]):
    parts = value.split()
    if not parts:
        errors.append(f"{where}: empty segment")
        return None
    kind = parts[0]
    kv = {}
    for item in parts[1:]:
        if "=" not in item:
            errors.append(f"{where}: segment fields must look like name=value ({item!r})")
            return None
        k, v = item.split("=", 1)
        kv[k] = v
    try:
        if kind == "mw":
            power = _parse_float(kv.pop("power_MHz"))
            if power < 0:
                raise ValueError("power_MHz must be non-negative")
            phase = kv.pop("phase")
            if phase not in ("x", "y", "-y"):
                raise ValueError("phase must be x, y or -y")
            duration = _parse_float(kv.pop("duration_us"))
            if duration < 0:
                raise ValueError("duration_us must be non-negative")
            seg = ("mw", power, phase, duration)
        elif kind == "wait":
            duration = _parse_float(kv.pop("duration_us"))
            if duration < 0:
                raise ValueError("duration_us must be non-negative")
            seg = ("wait", duration)
        else:
            raise ValueError(f"unknown segment kind {kind!r} (use mw or wait)")
        if kv:
            raise ValueError(f"unknown segment fields: {', '.join(sorted(kv))}")
        return seg
    except KeyError as exc:
        errors.append(f"{where}: segment is missing the {exc.args[0]} field")
    except ValueError as exc:
        errors.append(f"{where}: {exc}")
    return None


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate config text; raises ConfigError listing every problem."""
    errors: list[str] = []
    seen: dict[tuple[str, str], int] = {}
    values: dict[str, dict] = {name: {} for name in _SCHEMA}
    segments: list[tuple[int, int, str]] = []  # (index, line, value)
    section = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if name not in _SCHEMA:
                hint = difflib.get_close_matches(name, _SCHEMA.keys(), n=1)
                suffix = f"; did you mean [{hint[0]}]?" if hint else ""
                errors.append(f"{source}:{lineno}: unknown section [{name}]{suffix}")
                section = None
            else:
                section = name
            continue
        if ":" not in stripped:
            errors.append(f"{source}:{lineno}: expected 'key: value' or a [section] header")
            continue
        if section is None:
            errors.append(f"{source}:{lineno}: key outside of any valid section")
            continue
        key, value = (s.strip() for s in stripped.split(":", 1))
        where = f"{source}:{lineno}: {section}.{key}"

        prev = seen.get((section, key))
        if prev is not None:
            errors.append(
                f"{source}:{lineno}: duplicate key {key!r} in [{section}] "
                f"(first defined at line {prev})"
            )
            continue
        seen[(section, key)] = lineno

        m = _SEG_KEY.fullmatch(key)
        if section == "sequence" and m:
            segments.append((int(m.group(1)), lineno, value))
            continue

        spec = _SCHEMA[section].get(key)
        if spec is None:
            known = list(_SCHEMA[section].keys()) + (["seg1"] if section == "sequence" else [])
            hint = difflib.get_close_matches(key, known, n=1, cutoff=0.5)
            suffix = f"; did you mean {hint[0]!r}?" if hint else ""
            errors.append(f"{where}: unknown key{suffix}")
            continue
        field_name, parser, validator = spec
        try:
            parsed = parser(value)
            if validator is not None:
                validator(parsed, key)
        except ValueError as exc:
            errors.append(f"{where}: {exc}")
            continue
        values[section][field_name] = parsed

    seg_list = []
    for index, lineno, value in sorted(segments):
        seg = _parse_segment(value, f"{source}:{lineno}: sequence.seg{index}", errors)
        if seg is not None:
            seg_list.append(seg)
    if seg_list:
        values["sequence"]["segments"] = tuple(seg_list)

    # Cross-field checks.
    ens = values.get("ensemble", {})
    if ens.get("radial") == "annulus":
        lo = ens.get("r_min_nm", EnsembleSection.r_min_nm)
        hi = ens.get("r_max_nm", EnsembleSection.r_max_nm)
        if hi <= lo:
            errors.append(f"{source}: ensemble.r_max_nm must exceed ensemble.r_min_nm")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(**{name: _SECTION_TYPES[name](**vals) for name, vals in values.items()})


def parse_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), source=str(path))


def axis_from_range(rng: tuple) -> np.ndarray:
    start, stop, step = rng
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def default_config_text() -> str:
    """The full default configuration rendered as a config file."""
    cfg = ExperimentConfig()
    lines = ["# zfesr experiment configuration (defaults)"]
    for section, schema in _SCHEMA.items():
        lines.append("")
        lines.append(f"[{section}]")
        sec = getattr(cfg, section)
        for key, (field_name, _, _) in schema.items():
            v = getattr(sec, field_name, None)
            if v is None:
                lines.append(f"# {key}: (unset)")
            elif isinstance(v, tuple) and field_name.endswith(("_deg",)) and v and isinstance(v[0], tuple):
                lines.append(f"{key}: " + "; ".join(", ".join(f"{x:g}" for x in t) for t in v))
            elif isinstance(v, tuple) and len(v) == 3 and key.endswith(("axis_MHz", "durations_us")):
                lines.append(f"{key}: {v[0]:g}:{v[1]:g}:{v[2]:g}")
            elif isinstance(v, tuple):
                lines.append(f"{key}: " + ", ".join(f"{x:g}" for x in v))
            else:
                lines.append(f"{key}: {v}")
    return "\n".join(lines) + "\n"
