"""Scenario files: one INI document per run.

Sections are ``[payoff] [problem] [controller] [initial] [integrator]
[output]``. Every key is checked against the schema below; anything unknown
is rejected with its file location.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .control import (
    RATE_FAMILIES,
    ControlMatrix,
    ControllerSpec,
    ProblemKind,
    ProblemSpec,
    Side,
)
from .dynamics import DEFAULT_G0, AdaptiveRK45, Convergence, FixedRK4, IntegratorConfig
from .game import DomainError, PayoffMatrix

SCHEMA: dict[str, tuple[str, ...]] = {
    "payoff": ("a", "b", "c", "d"),
    "problem": ("kind", "target", "delta", "payoff_bound", "side_of_mixed_ne", "vanishing_gain"),
    "controller": ("mode", "matrix", "rate", "p", "q", "delta", "xbar", "sign", "conformity"),
    "initial": ("x0", "g0"),
    "integrator": (
        "method",
        "dt",
        "tol",
        "rel_tol",
        "abs_tol",
        "dt_min",
        "dt_max",
        "horizon",
        "log_gain_cap",
        "eps_x",
        "eps_g_settle",
        "window",
    ),
    "output": ("trajectory", "metrics", "sweep", "stride"),
}
RATE_KEYS = ("p", "q", "delta", "xbar", "sign")


class ConfigError(ValueError):
    """The scenario file cannot be parsed or violates the schema."""


@dataclass(frozen=True)
class OutputPaths:
    trajectory: Optional[Path] = None
    metrics: Optional[Path] = None
    sweep: Optional[Path] = None


@dataclass(frozen=True)
class ControllerChoice:
    """Either ``auto`` (design from the problem), ``explicit`` or ``none``."""

    mode: str = "auto"
    spec: Optional[ControllerSpec] = None
    conformity: bool = False
    p: Optional[float] = None
    q: Optional[float] = None


@dataclass(frozen=True)
class ScenarioConfig:
    payoff: PayoffMatrix
    problem: Optional[ProblemSpec]
    controller: ControllerChoice
    x0: float
    g0: float
    integrator: IntegratorConfig
    output: OutputPaths
    source: str = "<string>"


def _line_of(text: str, section: str, key: Optional[str] = None) -> int:
    current = None
    for n, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return n
        elif key is not None and current == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
            return n
    return 0


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, text: str, source: str):
        self.parser = parser
        self.text = text
        self.source = source

    def where(self, section: str, key: Optional[str] = None) -> str:
        line = _line_of(self.text, section, key)
        loc = f"[{section}]" + (f" {key}" if key else "")
        return f"{self.source}:{line}: {loc}" if line else f"{self.source}: {loc}"

    def raw(self, section: str, key: str) -> Optional[str]:
        if not self.parser.has_section(section) or not self.parser.has_option(section, key):
            return None
        return self.parser.get(section, key).strip()

    def float(self, section: str, key: str, default: Optional[float] = None, required: bool = False):
        v = self.raw(section, key)
        if v is None:
            if required:
                raise ConfigError(f"{self.where(section)}: missing required key '{key}'")
            return default
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"{self.where(section, key)}: expected a number, got {v!r}") from None

    def bool(self, section: str, key: str, default: Optional[bool] = None):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            raise ConfigError(f"{self.where(section, key)}: expected true/false, got {v!r}") from None

    def choice(self, section: str, key: str, options, default: Optional[str] = None):
        v = self.raw(section, key)
        if v is None:
            return default
        if v not in options:
            raise ConfigError(f"{self.where(section, key)}: {v!r} is not one of {sorted(options)}")
        return v


def _check_schema(r: _Reader) -> None:
    for section in r.parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{r.where(section)}: unknown section")
        for key in r.parser.options(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{r.where(section, key)}: unknown key")
    if not r.parser.has_section("payoff"):
        raise ConfigError(f"{r.source}: missing required section [payoff]")


def _problem(r: _Reader) -> Optional[ProblemSpec]:
    if not r.parser.has_section("problem"):
        return None
    kind = r.choice("problem", "kind", {k.value for k in ProblemKind})
    if kind is None:
        raise ConfigError(f"{r.where('problem')}: missing required key 'kind'")
    side = r.choice("problem", "side_of_mixed_ne", {s.value for s in Side}, Side.UNKNOWN.value)
    target = r.float("problem", "target", required=True)
    if kind != ProblemKind.SET_POINT.value and target in (0.0, 1.0):
        target = int(target)
    try:
        return ProblemSpec(
            ProblemKind(kind),
            target,
            delta=r.float("problem", "delta"),
            payoff_bound=r.float("problem", "payoff_bound"),
            side_of_mixed_ne=Side(side),
            vanishing_gain=r.bool("problem", "vanishing_gain"),
        )
    except DomainError as e:
        raise ConfigError(f"{r.where('problem')}: {e}") from None


def _controller(r: _Reader) -> ControllerChoice:
    mode = r.choice("controller", "mode", {"auto", "explicit", "none"}, "auto")
    p = r.float("controller", "p")
    q = r.float("controller", "q")
    if mode != "explicit":
        return ControllerChoice(mode, None, bool(r.bool("controller", "conformity", False)), p, q)
    matrix = r.choice("controller", "matrix", {g.value for g in ControlMatrix})
    family = r.choice("controller", "rate", set(RATE_FAMILIES))
    if matrix is None or family is None:
        raise ConfigError(f"{r.where('controller')}: explicit mode needs 'matrix' and 'rate'")
    cls = RATE_FAMILIES[family]
    params = {}
    for key in RATE_KEYS:
        v = r.float("controller", key)
        if v is None:
            continue
        if key not in cls.__dataclass_fields__:
            raise ConfigError(f"{r.where('controller', key)}: rate '{family}' has no parameter '{key}'")
        params[key] = int(v) if key == "sign" else v
    try:
        rate = cls(**params)
    except TypeError as e:
        raise ConfigError(f"{r.where('controller')}: rate '{family}': {e}") from None
    except DomainError as e:
        raise ConfigError(f"{r.where('controller')}: {e}") from None
    return ControllerChoice(mode, ControllerSpec(ControlMatrix(matrix), rate))


def _integrator(r: _Reader) -> IntegratorConfig:
    s = "integrator"
    method_name = r.choice(s, "method", {"rk45", "rk4"}, "rk45")
    try:
        if method_name == "rk4":
            method = FixedRK4(r.float(s, "dt", 0.01), r.float(s, "tol", 1e-9))
        else:
            d = AdaptiveRK45()
            method = AdaptiveRK45(
                r.float(s, "rel_tol", d.rel_tol),
                r.float(s, "abs_tol", d.abs_tol),
                r.float(s, "dt_min", d.dt_min),
                r.float(s, "dt_max", d.dt_max),
            )
        c = Convergence()
        conv = Convergence(
            eps_x=r.float(s, "eps_x", c.eps_x),
            eps_g_settle=r.float(s, "eps_g_settle", c.eps_g_settle),
            window=r.float(s, "window", c.window),
        )
        d = IntegratorConfig()
        return IntegratorConfig(
            method,
            r.float(s, "horizon", d.horizon),
            r.float("output", "stride", d.record_stride),
            conv,
            r.float(s, "log_gain_cap", d.log_gain_cap),
        )
    except DomainError as e:
        raise ConfigError(f"{r.where(s)}: {e}") from None


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None
    r = _Reader(parser, text, source)
    _check_schema(r)
    try:
        payoff = PayoffMatrix(*(r.float("payoff", k, required=True) for k in "abcd"))
    except DomainError as e:
        raise ConfigError(f"{r.where('payoff')}: {e}") from None

    def path(key):
        v = r.raw("output", key)
        return Path(v) if v else None

    return ScenarioConfig(
        payoff=payoff,
        problem=_problem(r),
        controller=_controller(r),
        x0=r.float("initial", "x0", 0.5),
        g0=r.float("initial", "g0", DEFAULT_G0),
        integrator=_integrator(r),
        output=OutputPaths(path("trajectory"), path("metrics"), path("sweep")),
        source=source,
    )


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    if not text.strip():
        raise ConfigError(f"{path}: empty scenario file")
    return parse_config(text, str(path))
