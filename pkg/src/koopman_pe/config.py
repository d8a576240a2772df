"""Run-configuration files: JSON with ``//`` and ``#`` line comments.

Records are dataclasses; unknown keys are rejected and every error carries the line of the
offending key when it can be found in the source text.
"""
from __future__ import annotations

import dataclasses
import json
import re
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .ode_sim import RepressilatorParams, VectorField, linear_field, repressilator_field

_COMMENT = re.compile(r'^\s*(//|#).*$')


def strip_comments(text: str) -> str:
    # whole-line comments only, so line numbers survive
    return "\n".join("" if _COMMENT.match(line) else line for line in text.splitlines())


def key_line(text: str | None, key: str) -> int | None:
    if not text:
        return None
    pat = re.compile(r'"%s"\s*:' % re.escape(key))
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.search(line):
            return i
    return None


def resolve_config_path(path: str | Path) -> Path | str:
    """Files on disk win; otherwise ``presets/<name>`` resolves to a bundled preset."""
    p = Path(path)
    for cand in (p, p.with_name(p.name + ".json")):
        if cand.is_file():
            return cand
    bundled = resources.files("koopman_pe") / "presets" / (p.stem + ".json")
    if bundled.is_file():
        return f"preset:{p.stem}"
    raise ConfigError(f"config file not found: {path}")


def load_config_text(path) -> str:
    where = resolve_config_path(path)
    if isinstance(where, str) and where.startswith("preset:"):
        name = where.split(":", 1)[1]
        return (resources.files("koopman_pe") / "presets" / f"{name}.json").read_text()
    return Path(where).read_text()


def parse_config(text: str) -> dict:
    try:
        data = json.loads(strip_comments(text))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(data, dict):
        raise ConfigError("line 1: top level must be an object", line=1)
    return data


def build_record(cls, data: dict, text: str | None = None, where: str = ""):
    """Instantiate dataclass ``cls`` from ``data``, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where or cls.__name__} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            line = key_line(text, key)
            raise ConfigError(_msg(line, f"unknown key {key!r} in {where or cls.__name__}"), line)
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        line = None
        for key in data:
            if key in str(exc):
                line = key_line(text, key)
                break
        raise ConfigError(_msg(line, f"{where or cls.__name__}: {exc}"), line) from exc


def _msg(line, text):
    return f"line {line}: {text}" if line else text


def field_from_spec(spec: dict) -> VectorField:
    """``{"kind": "repressilator", "alpha": ...}`` or ``{"kind": "linear", "A": [[...]]}``."""
    spec = dict(spec)
    kind = spec.pop("kind", "repressilator")
    if kind == "repressilator":
        return repressilator_field(RepressilatorParams(**spec))
    if kind == "linear":
        if set(spec) != {"A"}:
            raise ValueError("linear system takes exactly one key, 'A'")
        return linear_field(spec["A"])
    raise ValueError(f"unknown system kind {kind!r}")
