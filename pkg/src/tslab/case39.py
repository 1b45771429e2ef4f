"""Shipped base cases and their integrity checks.

The repository ships the standard New England 39-bus system: 39 buses,
10 generators, 46 branches (12 of them transformer branches).  Static data
follows the widely circulated 100 MVA line/load/schedule tables with series
resistance and line charging dropped (lossless model); machine constants
(H, x'd) are the classic 10-machine values with M converted at the 50 Hz
system frequency.  See tools/make_ieee39.py for the generating tables.
"""

from __future__ import annotations

import hashlib
from importlib import resources

from . import grid
from .textio import parse_sections


class DataCorruptionError(RuntimeError):
    """A shipped data file does not match its recorded checksum."""


# name -> (resource file, sha256 of file content)
_REGISTRY = {
    "ieee39": (
        "ieee39.case",
        "8e7b854763cb23d7d50ead15c99448b3f6d5da71289f0ddd878c65210e2966df",
    ),
}

# Undirected endpoint pairs of the 12 transformer branches in the 39-bus
# deck.  The branch schema itself carries no device type; fault-location
# screening needs to know which generator-bus branches are step-up
# transformers.
TRANSFORMERS = {
    "ieee39": frozenset({
        (11, 12), (12, 13), (6, 31), (10, 32), (19, 33), (20, 34),
        (22, 35), (23, 36), (25, 37), (2, 30), (29, 38), (19, 20),
    }),
}


def transformer_branches(name: str) -> frozenset:
    return TRANSFORMERS.get(name, frozenset())


def available_cases() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def case_text(name: str) -> str:
    if name not in _REGISTRY:
        raise KeyError(f"unknown case {name!r}; available: {', '.join(available_cases())}")
    fname, digest = _REGISTRY[name]
    data = resources.files("tslab.data").joinpath(fname).read_bytes()
    actual = hashlib.sha256(data).hexdigest()
    if actual != digest:
        raise DataCorruptionError(
            f"case {name!r}: checksum mismatch (expected {digest}, got {actual})"
        )
    return data.decode()


def load_case(name: str) -> grid.GridCase:
    """Load, checksum-verify, and structurally validate a shipped case."""
    return grid.case_from_sections(parse_sections(case_text(name)))
