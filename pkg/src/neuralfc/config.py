"""Key-value config files.

Format: one ``key = value`` per line, ``#`` starts a comment, blank lines
ignored. Values are floats, ints, comma-separated float vectors or bare
strings. The same vehicle file feeds the simulator, the cascade gains and
training, so every consumer reads only the keys it knows about.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import ConfigError


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        try:
            return tuple(float(p) for p in text.split(","))
        except ValueError:
            return text
    try:
        return float(text)
    except ValueError:
        return text


def parse_config(text: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = parse_value(value)
    return out


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())


def format_value(value) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: Mapping) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in cfg.items())


def update_config_file(path: str | Path, updates: Mapping) -> None:
    """Rewrite ``path`` with ``updates`` applied, keeping comments and order.

    Keys already present are replaced in place; new keys are appended.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    pending = dict(updates)
    out = []
    for raw in lines:
        body = raw.split("#", 1)[0]
        if "=" in body:
            key = body.split("=", 1)[0].strip()
            if key in pending:
                comment = raw[len(body):]
                line = f"{key} = {format_value(pending.pop(key))}"
                out.append(f"{line:<33} {comment}" if comment else line)
                continue
        out.append(raw)
    for key, value in pending.items():
        out.append(f"{key} = {format_value(value)}")
    path.write_text("\n".join(out) + "\n")


def require(cfg: Mapping, *keys: str) -> None:
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError("missing config keys: " + ", ".join(missing))


def default_config_path(name: str = "vehicle.cfg") -> Path:
    return Path(str(resources.files("neuralfc") / "configs" / name))


def default_config(name: str = "vehicle.cfg") -> dict:
    return load_config(default_config_path(name))
