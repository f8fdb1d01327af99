"""Run configuration: an INI-style file with ``[section]`` headers.

Example::

    [run]
    seed = 7

    [grid]
    n_points = 128
    x_min = -8
    x_max = 8

    [species A]
    statistics = boson
    particles = 2
    orbitals = 2

    [interaction AA]
    kind = contact
    strength = 0.5

    [propagation]
    mode = realtime
    t_end = 1.0

Units are dimensionless (hbar = m_ref = 1).  Unknown sections and keys are
errors.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields
from typing import Any

from .densops import AXES
from .grid1d import Boundary, Kind, Ramp
from .prop import Mode


class ConfigSyntaxError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConfigValidationError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass
class GridConfig:
    n_points: int = 128
    x_min: float = -8.0
    x_max: float = 8.0
    boundary: str = "hardwall"


@dataclass
class SpeciesConfig:
    statistics: str = "boson"
    particles: int = 1
    orbitals: int = 1
    mass: float = 1.0
    trap: str = "harmonic"
    omega: float = 1.0
    center: float = 0.0
    shake_amplitude: float = 0.0
    shake_frequency: float = 0.0
    initial_orbitals: str = "harmonic"
    initial_center: float = 0.0
    initial_coefficients: str = "single"


@dataclass
class InteractionConfig:
    species: str = "AA"
    kind: str = "contact"
    strength: float = 0.0
    sigma: float = 1.0
    ramp: str = "constant"
    ramp_time: float = 1.0
    ramp_amplitude: float = 0.0
    ramp_frequency: float = 0.0


@dataclass
class PropagationConfig:
    mode: str = "realtime"
    t_end: float = 1.0
    output_interval: float = 0.1
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    krylov_dim: int = 12
    max_step: float = math.inf
    initial_step: float = 1e-3
    max_iterations: int = 100000
    residual_tol: float = 1e-6
    output_dir: str = "."


@dataclass
class RunSection:
    seed: int = 0
    strict: bool = False


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    species: dict[str, SpeciesConfig] = field(default_factory=dict)
    interactions: list[InteractionConfig] = field(default_factory=list)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    run: RunSection = field(default_factory=RunSection)


_HEADER = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """Line numbers of section headers and keys, for error messages."""
    index: dict[tuple[str, str | None], int] = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        m = _HEADER.match(line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), number)
            continue
        m = _KEY.match(line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip().lower()), number)
    return index


def _convert(value: str, kind: type, where: str, line: int | None) -> Any:
    try:
        if kind is bool:
            lowered = value.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        return value.strip()
    except ValueError:
        raise ConfigSyntaxError(f"{where}: cannot read {value!r} as {kind.__name__}", line) from None


def _fill(obj, section: configparser.SectionProxy, name: str, lines) -> None:
    types = {f.name: f.type for f in fields(obj)}
    for key, value in section.items():
        line = lines.get((name, key))
        if key not in types:
            raise ConfigSyntaxError(f"unknown key {key!r} in section [{name}]", line)
        kind = {"int": int, "float": float, "bool": bool, "str": str}[types[key]]
        setattr(obj, key, _convert(value, kind, f"[{name}] {key}", line))


def parse_config(text: str) -> RunConfig:
    """Parse configuration text; raises :class:`ConfigSyntaxError`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       default_section="\0no-defaults")
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigSyntaxError("expected a [section] header", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigSyntaxError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigSyntaxError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigSyntaxError("malformed line", line) from None
    lines = _line_index(text)
    cfg = RunConfig()
    for name in parser.sections():
        section = parser[name]
        words = name.split()
        head = words[0].lower()
        if head == "grid" and len(words) == 1:
            _fill(cfg.grid, section, name, lines)
        elif head == "propagation" and len(words) == 1:
            _fill(cfg.propagation, section, name, lines)
        elif head == "run" and len(words) == 1:
            _fill(cfg.run, section, name, lines)
        elif head == "species" and len(words) == 2:
            spec = SpeciesConfig()
            _fill(spec, section, name, lines)
            cfg.species[words[1].upper()] = spec
        elif head == "interaction" and len(words) == 2:
            inter = InteractionConfig(species=words[1].upper())
            _fill(inter, section, name, lines)
            if "species" in section:
                raise ConfigSyntaxError("the interaction species are given in the header",
                                        lines.get((name, "species")))
            cfg.interactions.append(inter)
        else:
            raise ConfigSyntaxError(f"unknown section [{name}]", lines.get((name, None)))
    return cfg


def validate(cfg: RunConfig, fermion_contact_is_error: bool | None = None) -> list[str]:
    """Raise :class:`ConfigValidationError` listing every semantic problem.

    Returns the list of warnings that were not escalated.
    """
    errors: list[str] = []
    warnings: list[str] = []
    strict = cfg.run.strict if fermion_contact_is_error is None else fermion_contact_is_error
    g = cfg.grid
    if g.n_points < 4:
        errors.append(f"[grid] n_points must be at least 4, got {g.n_points}")
    if not g.x_max > g.x_min:
        errors.append("[grid] x_max must exceed x_min")
    if g.boundary.lower().replace("_", "") not in [b.value for b in Boundary]:
        errors.append(f"[grid] unknown boundary {g.boundary!r}")
    if not cfg.species:
        errors.append("at least one [species X] block is required")
    for name, s in cfg.species.items():
        where = f"[species {name}]"
        if name not in AXES:
            errors.append(f"{where}: species must be named A, B or C")
        if s.statistics.lower() not in ("boson", "fermion"):
            errors.append(f"{where}: statistics must be boson or fermion")
        if s.particles < 1 or s.orbitals < 1:
            errors.append(f"{where}: particles and orbitals must be positive")
        elif s.statistics.lower() == "fermion" and s.particles > s.orbitals:
            errors.append(f"{where}: {s.particles} fermions need at least as many orbitals")
        if s.orbitals > g.n_points:
            errors.append(f"{where}: more orbitals than grid points")
        if s.mass <= 0:
            errors.append(f"{where}: mass must be positive")
        if s.trap.lower() not in ("harmonic", "none"):
            errors.append(f"{where}: trap must be harmonic or none")
        init = s.initial_orbitals
        if init.lower() not in ("harmonic", "eigen") and not init.startswith("file:"):
            errors.append(f"{where}: initial_orbitals must be harmonic, eigen or file:<path>")
        if s.initial_coefficients.lower() not in ("single", "uniform", "random"):
            errors.append(f"{where}: initial_coefficients must be single, uniform or random")
    present = [x for x in AXES if x in cfg.species]
    if present and present != list(AXES[:len(present)]):
        errors.append(f"species must fill the axes in order A, B, C; got {', '.join(sorted(cfg.species))}")
    seen = set()
    for inter in cfg.interactions:
        tag = "".join(sorted(inter.species))
        where = f"[interaction {inter.species}]"
        if tag in seen:
            errors.append(f"{where}: duplicate interaction block")
        seen.add(tag)
        missing = sorted({c for c in tag if c not in cfg.species})
        if any(c not in AXES for c in tag) or len(tag) not in (2, 3):
            errors.append(f"{where}: tag must list two or three species letters from A, B, C")
            continue
        if missing:
            errors.append(f"{where}: refers to undeclared species {', '.join(missing)}")
        kinds = [k.value for k in Kind]
        kind = inter.kind.lower()
        if kind in ("contact", "gaussian") and len(tag) == 3:
            kind += "_triple"
        if kind not in kinds:
            errors.append(f"{where}: unknown kind {inter.kind!r}")
        elif Kind(kind).bodies != len(tag):
            errors.append(f"{where}: {inter.kind} does not match a {len(tag)}-body tag")
        if "gaussian" in kind and not inter.sigma > 0:
            errors.append(f"{where}: sigma must be positive")
        if inter.ramp.lower() not in [r.value for r in Ramp]:
            errors.append(f"{where}: unknown ramp {inter.ramp!r}")
        elif inter.ramp.lower() == "linear" and not inter.ramp_time > 0:
            errors.append(f"{where}: ramp_time must be positive")
        if not math.isfinite(inter.strength):
            errors.append(f"{where}: strength must be finite")
        if "contact" in kind and not missing:
            doubled = [c for c in set(tag) if tag.count(c) > 1
                       and cfg.species[c].statistics.lower() == "fermion"]
            if doubled:
                message = (f"{where}: contact force between identical fermions of species "
                           f"{', '.join(sorted(doubled))} has no effect")
                (errors if strict else warnings).append(message)
    p = cfg.propagation
    if p.mode.lower().replace("_", "").replace("-", "") not in [m.value for m in Mode]:
        errors.append(f"[propagation] unknown mode {p.mode!r}")
    if p.t_end < 0:
        errors.append("[propagation] t_end must be non-negative")
    for key in ("output_interval", "rel_tol", "abs_tol", "max_step", "initial_step", "residual_tol"):
        if not getattr(p, key) > 0:
            errors.append(f"[propagation] {key} must be positive")
    if p.krylov_dim < 2:
        errors.append("[propagation] krylov_dim must be at least 2")
    if p.max_iterations < 1:
        errors.append("[propagation] max_iterations must be positive")
    if errors:
        raise ConfigValidationError(errors)
    return warnings


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize(cfg: RunConfig) -> str:
    out = []

    def block(header: str, obj, skip: tuple[str, ...] = ()) -> None:
        out.append(f"[{header}]")
        for f in fields(obj):
            if f.name not in skip:
                out.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        out.append("")

    block("run", cfg.run)
    block("grid", cfg.grid)
    for name, s in cfg.species.items():
        block(f"species {name}", s)
    for inter in cfg.interactions:
        block(f"interaction {inter.species}", inter, skip=("species",))
    block("propagation", cfg.propagation)
    return "\n".join(out)


def interaction_kind(inter: InteractionConfig) -> str:
    kind = inter.kind.lower()
    if len(inter.species) == 3 and not kind.endswith("_triple"):
        kind += "_triple"
    return kind

