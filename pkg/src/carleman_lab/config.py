"""Key-value configuration files.

    [domain]
    kind = torus
    length = 1.0

    [potential]
    spec = weierstrass{alpha=0.5,levels=6}

Sections are ``[domain]``, ``[potential]``, ``[weight]`` and ``[experiment]``;
``#`` and ``;`` start comments.  Lists are comma separated.  Errors carry the
line number and the key.  Every field filled from :data:`DEFAULTS` is listed
by :func:`echo`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

from .experiments import ExperimentConfig, ExperimentError

__all__ = ["ConfigError", "FIELDS", "DEFAULTS", "parse_config", "format_config", "echo", "config_hash"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class _Field:
    section: str
    key: str
    attr: str
    kind: str  # str, float, int, floats, ints


FIELDS = (
    _Field("domain", "kind", "domain_kind", "str"),
    _Field("domain", "length", "domain_length", "float"),
    _Field("domain", "n", "domain_n", "int"),
    _Field("domain", "inner", "domain_inner", "float"),
    _Field("potential", "spec", "potential", "str"),
    _Field("weight", "spec", "weight", "str"),
    _Field("weight", "delta", "delta", "float"),
    _Field("weight", "d", "d", "float"),
    _Field("experiment", "mode", "mode", "str"),
    _Field("experiment", "h", "h", "floats"),
    _Field("experiment", "kappa", "kappa", "float"),
    _Field("experiment", "slack", "slack", "float"),
    _Field("experiment", "alpha", "alpha", "floats"),
    _Field("experiment", "energy", "energy", "float"),
    _Field("experiment", "region", "region", "str"),
    _Field("experiment", "support", "support", "str"),
    _Field("experiment", "source", "source", "str"),
    _Field("experiment", "wave", "wave", "ints"),
    _Field("experiment", "tests", "tests", "int"),
    _Field("experiment", "family", "family", "str"),
    _Field("experiment", "seed", "seed", "int"),
    _Field("experiment", "kernel", "kernel", "str"),
    _Field("experiment", "growth", "growth", "float"),
    _Field("experiment", "quality", "quality", "float"),
    _Field("experiment", "tol", "tol", "float"),
)
SECTIONS = ("domain", "potential", "weight", "experiment")
REQUIRED = ("domain_kind", "domain_length", "potential")
DEFAULTS = {
    "domain_n": 128,
    "delta": 1.0,
    "d": 10.0,
    "kappa": 0.5,
    "slack": 0.2,
    "h": (0.2, 0.1, 0.05, 0.025),
}
_BY_KEY = {(f.section, f.key): f for f in FIELDS}
_BY_ATTR = {f.attr: f for f in FIELDS}


def _convert(f: _Field, text: str):
    if f.kind == "str":
        if not text:
            raise ValueError("empty value")
        return text
    if f.kind == "float":
        return float(text)
    if f.kind == "int":
        return int(text)
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("empty list")
    conv = float if f.kind == "floats" else int
    return tuple(conv(s) for s in items)


def parse_config(text: str) -> ExperimentConfig:
    values: dict = {}
    lines: dict = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]; expected {', '.join(SECTIONS)}")
            continue
        key, eq, value = (s.strip() for s in line.partition("="))
        if not eq:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key {key!r} outside any section")
        f = _BY_KEY.get((section, key.lower()))
        if f is None:
            known = sorted(k for s, k in _BY_KEY if s == section)
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]; expected one of {known}")
        if f.attr in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{section}]")
        try:
            values[f.attr] = _convert(f, value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: key {key!r}: cannot parse {value!r} ({exc})") from None
        lines[f.attr] = lineno
    for attr in REQUIRED:
        if attr not in values:
            f = _BY_ATTR[attr]
            raise ConfigError(f"missing required field: [{f.section}] {f.key}")
    defaulted = tuple(a for a in DEFAULTS if a not in values)
    try:
        return ExperimentConfig(**values, defaulted=defaulted)
    except ExperimentError as exc:
        msg = str(exc)
        attr = msg.split(":", 1)[0]
        f = _BY_ATTR.get(attr)
        if f is None:
            raise ConfigError(msg) from None
        where = f"line {lines[attr]}: " if attr in lines else ""
        raise ConfigError(f"{where}key {f.key!r} in [{f.section}]: {msg.split(':', 1)[1].strip()}") from None


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical text: every set field, fixed order, shortest round-trip floats."""
    out = []
    for section in SECTIONS:
        body = [
            f"{f.key} = {_format_value(getattr(cfg, f.attr))}"
            for f in FIELDS
            if f.section == section and getattr(cfg, f.attr) is not None
        ]
        if body:
            out.append(f"[{section}]")
            out.extend(body)
            out.append("")
    return "\n".join(out)


def echo(cfg: ExperimentConfig) -> str:
    """Resolved configuration with each defaulted field marked."""
    lines = []
    for f in FIELDS:
        value = getattr(cfg, f.attr)
        if value is None:
            continue
        mark = "  (default)" if f.attr in cfg.defaulted else ""
        lines.append(f"{f.section}.{f.key} = {_format_value(value)}{mark}")
    lines.append(f"defaulted fields: {len(cfg.defaulted)}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical text with the seed removed (the seed is recorded separately)."""
    return hashlib.sha256(format_config(replace(cfg, seed=None)).encode()).hexdigest()
