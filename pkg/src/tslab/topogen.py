"""Randomized grid-topology alteration with connectivity and feasibility screening.

Two protocols:

* ``swap4`` — remove four edges and add four new edges between previously
  unconnected node pairs, preserving node and edge counts.
* ``remove_m`` — remove m edges (m = 1, 2, 3) without replacement.

Candidates are rejection-sampled until the altered grid is (I) connected and
(II) admits a converged power flow with every branch-angle difference below
pi/2 (the static stability limit of a lossless line).  Edges incident to
generator buses are never removal candidates, which prevents generator
islanding.  Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import powerflow, textio
from .grid import Branch, GridCase, InvalidParameterError, is_connected, validate

MAX_REJECTIONS = 10_000
MAX_BRANCH_ANGLE = np.pi / 2


class GenerationExhaustedError(RuntimeError):
    """No feasible altered topology found within the rejection budget."""


@dataclass(frozen=True)
class TopologySpec:
    base_case_id: str
    removed_edges: tuple          # branch indices into the base case
    added_edges: tuple            # (from_bus, to_bus, x) triples
    seed: int
    kind: str                     # swap4 | remove_m | base

    @property
    def topology_id(self) -> str:
        return f"{self.kind}-{self.seed & 0xFFFFFFFFFFFFFFFF:016x}"


def identity_spec(base: GridCase) -> TopologySpec:
    """The unaltered base case wrapped as a topology (plumbing for tests/no-fault runs)."""
    return TopologySpec(base_case_id=base.id, removed_edges=(), added_edges=(), seed=0, kind="base")


def apply_topology(base: GridCase, spec: TopologySpec) -> GridCase:
    """Materialize the altered case described by a TopologySpec."""
    removed = set(spec.removed_edges)
    for l in removed:
        if not 0 <= l < len(base.branches):
            raise InvalidParameterError(f"removed edge index {l} out of range")
    branches = [br for l, br in enumerate(base.branches) if l not in removed]
    branches += [Branch(int(f), int(t), float(x)) for f, t, x in spec.added_edges]
    case = replace(base, id=spec.topology_id, branches=tuple(branches))
    return validate(case)


def new_edge_reactance(base: GridCase, rng: np.random.Generator) -> float:
    """Reactance for an added line, uniform over the base case's empirical range."""
    if not base.branches:
        raise InvalidParameterError("base case has no branches")
    xs = [br.x for br in base.branches]
    lo, hi = min(xs), max(xs)
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def removable_edges(base: GridCase) -> list[int]:
    gen_buses = base.generator_buses()
    return [l for l, br in enumerate(base.branches)
            if br.from_bus not in gen_buses and br.to_bus not in gen_buses]


def _non_adjacent_pairs(base: GridCase) -> list[tuple[int, int]]:
    present = {br.key() for br in base.branches}
    n = base.n
    return [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)
            if (i, j) not in present]


def feasible(case: GridCase) -> bool:
    """Screen II: converged flat-start power flow, all branch angles < pi/2."""
    try:
        sol = powerflow.solve(case)
    except Exception:
        return False
    if not sol.converged:
        return False
    return bool(np.all(np.abs(powerflow.branch_angles(case, sol)) < MAX_BRANCH_ANGLE))


def _screened(base: GridCase, spec: TopologySpec) -> bool:
    removed = set(spec.removed_edges)
    # connectivity first: apply_topology would reject a split graph anyway,
    # but checking before validation keeps the error paths distinct
    probe = [br for l, br in enumerate(base.branches) if l not in removed]
    probe += [Branch(int(f), int(t), float(x)) for f, t, x in spec.added_edges]
    probe_case = replace(base, branches=tuple(probe))
    if not is_connected(probe_case):
        return False
    return feasible(apply_topology(base, spec))


def generate_swap_topology(base: GridCase, rng_seed: int) -> TopologySpec:
    """Remove 4 eligible edges, add 4 edges between previously unconnected pairs."""
    candidates = removable_edges(base)
    pairs = _non_adjacent_pairs(base)
    if len(candidates) < 4 or len(pairs) < 4:
        raise GenerationExhaustedError(
            f"base case {base.id!r} cannot support a 4-out/4-in swap")
    rng = np.random.default_rng(rng_seed)
    for _ in range(MAX_REJECTIONS):
        removed = tuple(sorted(int(i) for i in rng.choice(candidates, size=4, replace=False)))
        picks = rng.choice(len(pairs), size=4, replace=False)
        added = tuple(
            (pairs[p][0], pairs[p][1], new_edge_reactance(base, rng)) for p in picks
        )
        spec = TopologySpec(base_case_id=base.id, removed_edges=removed,
                            added_edges=added, seed=int(rng_seed), kind="swap4")
        if _screened(base, spec):
            return spec
    raise GenerationExhaustedError(
        f"no feasible swap4 topology for seed {rng_seed} within {MAX_REJECTIONS} attempts")


def generate_removal_topology(base: GridCase, m: int, rng_seed: int) -> TopologySpec:
    """Remove m edges (m in {1,2,3}) subject to both screens."""
    if m not in (1, 2, 3):
        raise InvalidParameterError("m must be 1, 2, or 3")
    candidates = removable_edges(base)
    if len(candidates) < m:
        raise GenerationExhaustedError(f"fewer than {m} removable edges")
    rng = np.random.default_rng(rng_seed)
    for _ in range(MAX_REJECTIONS):
        removed = tuple(sorted(int(i) for i in rng.choice(candidates, size=m, replace=False)))
        spec = TopologySpec(base_case_id=base.id, removed_edges=removed,
                            added_edges=(), seed=int(rng_seed), kind="remove_m")
        if _screened(base, spec):
            return spec
    raise GenerationExhaustedError(
        f"no feasible remove-{m} topology for seed {rng_seed} within {MAX_REJECTIONS} attempts")


# ---------------------------------------------------------------------------
# Persistence: materialized case + provenance
# ---------------------------------------------------------------------------

def save_topology(spec: TopologySpec, base: GridCase, path) -> GridCase:
    from .grid import case_sections

    case = apply_topology(base, spec)
    sections = case_sections(case)
    prov = textio.Section("provenance")
    prov.kv = {
        "base_case_id": spec.base_case_id,
        "kind": spec.kind,
        "seed": str(spec.seed),
        "removed_edges": " ".join(str(i) for i in spec.removed_edges),
    }
    added = textio.Section("added_edges")
    added.rows = [[f, t, x] for f, t, x in spec.added_edges]
    textio.write_sections(path, sections + [prov, added])
    return case


def load_topology(path) -> tuple[TopologySpec, GridCase]:
    from .grid import case_from_sections

    sections = textio.read_sections(path)
    prov = sections["provenance"]
    removed = tuple(int(i) for i in prov.get("removed_edges", "").split())
    added = tuple((int(r[0]), int(r[1]), float(r[2]))
                  for r in sections.get("added_edges", textio.Section("added_edges")).rows)
    spec = TopologySpec(
        base_case_id=prov.require("base_case_id"),
        removed_edges=removed,
        added_edges=added,
        seed=int(prov.require("seed")),
        kind=prov.require("kind"),
    )
    case = case_from_sections(sections)
    return spec, case
