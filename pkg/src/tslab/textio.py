"""Sectioned plain-text format used by case, topology, record, sample and config files.

A file is a sequence of ``[section]`` blocks.  Each block holds ``key = value``
lines and/or bare whitespace-separated data rows.  ``#`` starts a comment,
blank lines are ignored.  Floats are written with 15 significant digits so
per-unit data round-trips well beyond the 12 digits the formats require.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


def fmt(value) -> str:
    """Render a value for a text file.

    Floats use Python's shortest exact representation, which round-trips
    float64 bit-exactly (and so always carries the full precision, beyond
    the 12-significant-digit floor the formats require).
    """
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def fmt_row(values) -> str:
    return " ".join(fmt(v) for v in values)


@dataclass
class Section:
    name: str
    kv: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def get(self, key: str, default=None) -> str:
        return self.kv.get(key, default)

    def require(self, key: str) -> str:
        if key not in self.kv:
            raise KeyError(f"section [{self.name}] is missing key '{key}'")
        return self.kv[key]


def parse_sections(text: str) -> dict[str, Section]:
    """Parse sectioned text into an ordered name -> Section mapping."""
    sections: dict[str, Section] = {}
    current: Section | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name in sections:
                raise ValueError(f"duplicate section [{name}] at line {lineno}")
            current = Section(name)
            sections[name] = current
            continue
        if current is None:
            raise ValueError(f"data before any [section] at line {lineno}")
        if "=" in line:
            key, _, value = line.partition("=")
            current.kv[key.strip()] = value.strip()
        else:
            current.rows.append(line.split())
    return sections


def read_sections(path) -> dict[str, Section]:
    return parse_sections(Path(path).read_text())


def render_sections(sections) -> str:
    """Render an iterable of Section objects back into file text."""
    out: list[str] = []
    for sec in sections:
        out.append(f"[{sec.name}]")
        for key, value in sec.kv.items():
            out.append(f"{key} = {fmt(value)}")
        for row in sec.rows:
            out.append(fmt_row(row) if not isinstance(row, str) else row)
        out.append("")
    return "\n".join(out)


def write_sections(path, sections) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_sections(sections))
