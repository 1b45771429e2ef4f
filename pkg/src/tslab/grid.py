"""Graph-theoretic and electrical representation of a power system.

A :class:`GridCase` is the complete static description of one topology:
buses, series-reactance branches, and classical generator parameters.  From
it the module builds the oriented incidence matrix, the voltage-weighted
Laplacian-form matrix ``A = B diag(w) B^T`` with ``w_l = V_i V_j / x_ij``,
and its Moore-Penrose pseudo-inverse.  All structures are immutable after
construction and every operation is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import textio


class InvalidCaseError(ValueError):
    """The case data violates a structural invariant."""


class InvalidParameterError(ValueError):
    """A numeric argument is outside its admissible range."""


class NumericalError(RuntimeError):
    """A dense linear-algebra routine failed to converge."""


BUS_TYPES = ("slack", "PV", "PQ")

# Relative eigenvalue cutoff separating the structural kernel of the
# Laplacian from numerical noise (adequate up to a few hundred nodes).
PINV_REL_TOL = 1e-9


@dataclass(frozen=True)
class Bus:
    id: int
    type: str          # slack | PV | PQ
    vset: float        # voltage magnitude setpoint, p.u.
    pload: float       # active load, p.u.
    qload: float       # reactive load, p.u.


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    x: float           # series reactance, p.u. (resistance neglected)

    def key(self) -> tuple[int, int]:
        """Undirected endpoint pair, smaller id first."""
        return (self.from_bus, self.to_bus) if self.from_bus < self.to_bus else (self.to_bus, self.from_bus)


@dataclass(frozen=True)
class Generator:
    bus: int
    m: float           # inertia constant, s^2/rad * p.u.
    d: float           # damping, p.u.
    xd_prime: float    # transient reactance, p.u.
    pm: float          # scheduled mechanical power, p.u.


@dataclass(frozen=True)
class GridCase:
    id: str
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    base_mva: float = 100.0
    frequency_hz: float = 50.0

    @property
    def n(self) -> int:
        return len(self.buses)

    def bus_index(self, bus_id: int) -> int:
        return bus_id - 1

    def generator_buses(self) -> set[int]:
        return {g.bus for g in self.generators}

    def slack_index(self) -> int:
        for i, b in enumerate(self.buses):
            if b.type == "slack":
                return i
        raise InvalidCaseError("no slack bus")

    def adjacency_lists(self, removed_edges=()) -> list[list[int]]:
        """0-based adjacency lists with the given branch indices removed."""
        removed = set(removed_edges)
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for l, br in enumerate(self.branches):
            if l in removed:
                continue
            i, j = br.from_bus - 1, br.to_bus - 1
            adj[i].append(j)
            adj[j].append(i)
        return adj


def validate(case: GridCase) -> GridCase:
    """Check all structural invariants; return the case on success."""
    n = len(case.buses)
    if n == 0:
        raise InvalidCaseError("empty bus list")
    ids = [b.id for b in case.buses]
    if ids != list(range(1, n + 1)):
        raise InvalidCaseError("bus ids must be exactly 1..n in order")
    slack = [b for b in case.buses if b.type == "slack"]
    if len(slack) != 1:
        raise InvalidCaseError(f"expected exactly one slack bus, found {len(slack)}")
    for b in case.buses:
        if b.type not in BUS_TYPES:
            raise InvalidCaseError(f"bus {b.id}: unknown type {b.type!r}")
        if b.vset <= 0:
            raise InvalidCaseError(f"bus {b.id}: nonpositive voltage setpoint")
    seen: set[tuple[int, int]] = set()
    for l, br in enumerate(case.branches):
        if br.from_bus == br.to_bus:
            raise InvalidCaseError(f"branch {l}: self-loop at bus {br.from_bus}")
        for end in (br.from_bus, br.to_bus):
            if not 1 <= end <= n:
                raise InvalidCaseError(f"branch {l}: bus {end} does not exist")
        if br.x <= 0:
            raise InvalidCaseError(f"branch {l}: reactance must be positive")
        if br.key() in seen:
            raise InvalidCaseError(f"duplicate branch between {br.key()}")
        seen.add(br.key())
    gen_buses = set()
    for g in case.generators:
        if not 1 <= g.bus <= n:
            raise InvalidCaseError(f"generator bus {g.bus} does not exist")
        if g.bus in gen_buses:
            raise InvalidCaseError(f"duplicate generator at bus {g.bus}")
        gen_buses.add(g.bus)
        if g.m <= 0 or g.xd_prime <= 0 or g.d < 0:
            raise InvalidCaseError(f"generator at bus {g.bus}: invalid dynamic parameters")
    if not is_connected(case):
        raise InvalidCaseError("grid graph is not connected")
    return case


@dataclass(frozen=True)
class NetworkMatrices:
    """Incidence/Laplacian structures of one topology at fixed bus voltages."""

    incidence: np.ndarray   # n x |E|, one -1 (source) and +1 (sink) per column
    weights: np.ndarray     # |E|, w_l = V_i V_j / x_ij
    laplacian: np.ndarray   # n x n, B diag(w) B^T (PSD)
    pinv: np.ndarray        # n x n Moore-Penrose pseudo-inverse
    rank: int


def build_incidence(case: GridCase) -> np.ndarray:
    """Oriented incidence matrix; edge l runs from-bus -> to-bus, the to-bus is the sink."""
    validate(case)
    n, m = case.n, len(case.branches)
    b = np.zeros((n, m))
    for l, br in enumerate(case.branches):
        b[br.from_bus - 1, l] = -1.0
        b[br.to_bus - 1, l] = 1.0
    return b


def build_laplacian(case: GridCase, voltages: np.ndarray) -> NetworkMatrices:
    """Voltage-weighted Laplacian-form matrix and its pseudo-inverse.

    ``voltages`` are per-bus magnitudes (typically the pre-fault power-flow
    solution, held constant per topology).  Weights are positive,
    ``w_l = V_i V_j / x_ij``, so the matrix is the standard PSD weighted
    graph Laplacian.
    """
    voltages = np.asarray(voltages, dtype=float)
    if voltages.shape != (case.n,):
        raise InvalidParameterError(f"expected {case.n} voltage magnitudes")
    if np.any(voltages <= 0):
        raise InvalidParameterError("voltage magnitudes must be positive")
    incidence = build_incidence(case)
    w = np.array(
        [voltages[br.from_bus - 1] * voltages[br.to_bus - 1] / br.x for br in case.branches]
    )
    lap = (incidence * w) @ incidence.T
    lap = 0.5 * (lap + lap.T)  # enforce exact symmetry
    pinv, rank = pseudo_inverse(lap, rel_tol=PINV_REL_TOL, return_rank=True)
    return NetworkMatrices(incidence=incidence, weights=w, laplacian=lap, pinv=pinv, rank=rank)


def pseudo_inverse(a: np.ndarray, rel_tol: float = PINV_REL_TOL, return_rank: bool = False):
    """Moore-Penrose pseudo-inverse of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues below ``rel_tol * lambda_max`` are treated as exact zeros.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidParameterError("matrix must be square")
    if not np.allclose(a, a.T, atol=1e-12):
        raise InvalidParameterError("matrix must be symmetric within 1e-12")
    try:
        eigvals, eigvecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    lam_max = float(np.max(np.abs(eigvals))) if eigvals.size else 0.0
    cutoff = rel_tol * lam_max
    keep = np.abs(eigvals) > cutoff
    inv = np.zeros_like(eigvals)
    inv[keep] = 1.0 / eigvals[keep]
    pinv = (eigvecs * inv) @ eigvecs.T
    pinv = 0.5 * (pinv + pinv.T)
    if return_rank:
        return pinv, int(np.count_nonzero(keep))
    return pinv


def is_connected(case: GridCase, removed_edges=()) -> bool:
    """True iff the residual graph is connected (breadth-first traversal)."""
    n = case.n
    if n == 0:
        return False
    adj = case.adjacency_lists(removed_edges)
    seen = [False] * n
    queue = [0]
    seen[0] = True
    count = 1
    while queue:
        u = queue.pop()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                queue.append(v)
    return count == n


def permute_case(case: GridCase, perm: np.ndarray) -> GridCase:
    """Relabel nodes: new id of old bus i (1-based) is ``perm[i-1] + 1``.

    ``perm`` is a 0-based permutation of range(n).  Used by the permutation
    equivariance checks and the feature-augmentation consistency tests.
    """
    perm = np.asarray(perm)
    n = case.n
    new_buses = [None] * n
    for old, b in enumerate(case.buses):
        new_buses[perm[old]] = replace(b, id=int(perm[old]) + 1)
    new_branches = tuple(
        replace(br, from_bus=int(perm[br.from_bus - 1]) + 1, to_bus=int(perm[br.to_bus - 1]) + 1)
        for br in case.branches
    )
    new_gens = tuple(replace(g, bus=int(perm[g.bus - 1]) + 1) for g in case.generators)
    return replace(case, buses=tuple(new_buses), branches=new_branches, generators=new_gens)


# ---------------------------------------------------------------------------
# Case text format
# ---------------------------------------------------------------------------

def case_sections(case: GridCase) -> list[textio.Section]:
    meta = textio.Section("meta")
    meta.kv = {
        "id": case.id,
        "base_mva": textio.fmt(float(case.base_mva)),
        "frequency_hz": textio.fmt(float(case.frequency_hz)),
    }
    buses = textio.Section("buses")
    buses.rows = [[b.id, b.type, b.vset, b.pload, b.qload] for b in case.buses]
    branches = textio.Section("branches")
    branches.rows = [[br.from_bus, br.to_bus, br.x] for br in case.branches]
    gens = textio.Section("generators")
    gens.rows = [[g.bus, g.m, g.d, g.xd_prime, g.pm] for g in case.generators]
    return [meta, buses, branches, gens]


def save_case(case: GridCase, path) -> None:
    textio.write_sections(path, case_sections(case))


def case_from_sections(sections: dict[str, textio.Section]) -> GridCase:
    for name in ("meta", "buses", "branches", "generators"):
        if name not in sections:
            raise InvalidCaseError(f"case file is missing section [{name}]")
    meta = sections["meta"]
    buses = tuple(
        Bus(id=int(r[0]), type=r[1], vset=float(r[2]), pload=float(r[3]), qload=float(r[4]))
        for r in sections["buses"].rows
    )
    branches = tuple(
        Branch(from_bus=int(r[0]), to_bus=int(r[1]), x=float(r[2]))
        for r in sections["branches"].rows
    )
    generators = tuple(
        Generator(bus=int(r[0]), m=float(r[1]), d=float(r[2]), xd_prime=float(r[3]), pm=float(r[4]))
        for r in sections["generators"].rows
    )
    case = GridCase(
        id=meta.require("id"),
        buses=buses,
        branches=branches,
        generators=generators,
        base_mva=float(meta.get("base_mva", "100")),
        frequency_hz=float(meta.get("frequency_hz", "50")),
    )
    return validate(case)


def load_case_file(path) -> GridCase:
    return case_from_sections(textio.read_sections(path))


def random_connected_case(n: int, rng: np.random.Generator, extra_edge_prob: float = 0.3,
                          tree_only: bool = False) -> GridCase:
    """Random connected test grid: a random spanning tree plus optional chords.

    Buses get unit-ish voltage setpoints and zero load; reactances are drawn
    in [0.01, 1.0].  Intended for property tests, not for simulation.
    """
    if n < 2:
        raise InvalidParameterError("need at least 2 nodes")
    order = rng.permutation(n)
    edges: set[tuple[int, int]] = set()
    for k in range(1, n):
        a = int(order[k])
        bnode = int(order[rng.integers(0, k)])
        edges.add((min(a, bnode) + 1, max(a, bnode) + 1))
    if not tree_only:
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                if (i, j) not in edges and rng.random() < extra_edge_prob:
                    edges.add((i, j))
    branches = tuple(
        Branch(i, j, float(rng.uniform(0.01, 1.0))) for i, j in sorted(edges)
    )
    buses = tuple(
        Bus(id=i, type="slack" if i == 1 else "PQ", vset=float(rng.uniform(0.9, 1.1)),
            pload=0.0, qload=0.0)
        for i in range(1, n + 1)
    )
    gens = (Generator(bus=1, m=1.0, d=0.0, xd_prime=0.1, pm=0.0),)
    return validate(GridCase(id=f"rand{n}", buses=buses, branches=branches, generators=gens))
