"""Small deterministic text formats: CSV reports and flat key=value configs.

Every writer here produces byte-identical output for identical inputs
(fixed float formatting, "\n" line endings, sorted nothing implicitly),
which is what makes re-runs of the CLI reproducible at the file level.
"""
from __future__ import annotations

from pathlib import Path


def fmt(value) -> str:
    """Canonical text for one CSV cell."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def write_csv(path: str | Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text().strip("\n")
    lines = text.split("\n")
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


class ConfigError(ValueError):
    """Raised for malformed flat config files."""


def write_flat_config(path: str | Path, items: dict) -> None:
    """Write `key = value` lines; strings are double-quoted."""
    lines = []
    for key, value in items.items():
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        elif isinstance(value, int):
            text = str(value)
        elif isinstance(value, str):
            text = '"' + value + '"'
        else:
            raise ConfigError(f"unsupported config value for {key!r}: {value!r}")
        lines.append(f"{key} = {text}")
    Path(path).write_text("\n".join(lines) + "\n")


def parse_flat_value(text: str):
    text = text.strip()
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def read_flat_config(path: str | Path) -> dict:
    """Read `key = value` lines, skipping blanks and # comments."""
    items: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        items[key.strip()] = parse_flat_value(value)
    return items
