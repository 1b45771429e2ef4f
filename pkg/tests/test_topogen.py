"""Topology alteration protocols: structure, screening, determinism."""

import numpy as np
import pytest

from tslab import grid, powerflow, topogen


def triangle_case() -> grid.GridCase:
    buses = tuple(grid.Bus(i, "slack" if i == 1 else "PQ", 1.0, 0.0, 0.0) for i in (1, 2, 3))
    branches = (grid.Branch(1, 2, 0.1), grid.Branch(2, 3, 0.1), grid.Branch(1, 3, 0.1))
    return grid.GridCase("tri", buses, branches, (grid.Generator(1, 1.0, 0.0, 0.1, 0.0),))


def test_swap4_structure(ieee39):
    spec = topogen.generate_swap_topology(ieee39, rng_seed=1)
    assert len(spec.removed_edges) == 4 and len(spec.added_edges) == 4
    base_pairs = {br.key() for br in ieee39.branches}
    gen_buses = ieee39.generator_buses()
    for l in spec.removed_edges:
        br = ieee39.branches[l]
        assert br.from_bus not in gen_buses and br.to_bus not in gen_buses
    for f, t, x in spec.added_edges:
        assert (min(f, t), max(f, t)) not in base_pairs
        assert x > 0
    case = topogen.apply_topology(ieee39, spec)
    assert case.n == 39 and len(case.branches) == 46    # counts preserved
    assert grid.is_connected(case)
    assert topogen.feasible(case)


def test_swap4_deterministic(ieee39):
    a = topogen.generate_swap_topology(ieee39, rng_seed=42)
    b = topogen.generate_swap_topology(ieee39, rng_seed=42)
    assert a == b


def test_swap4_triangle_exhausts():
    with pytest.raises(topogen.GenerationExhaustedError):
        topogen.generate_swap_topology(triangle_case(), rng_seed=0)


def test_removal_counts(ieee39):
    spec = topogen.generate_removal_topology(ieee39, 1, rng_seed=5)
    assert len(spec.removed_edges) == 1 and not spec.added_edges
    case = topogen.apply_topology(ieee39, spec)
    assert len(case.branches) == 45
    assert grid.is_connected(case)


def test_removal_deterministic(ieee39):
    a = topogen.generate_removal_topology(ieee39, 3, rng_seed=9)
    b = topogen.generate_removal_topology(ieee39, 3, rng_seed=9)
    assert a == b
    assert len(a.removed_edges) == 3


def test_removal_rejects_bridges():
    # path graph: every edge is a bridge, so removal can never pass screening
    buses = tuple(grid.Bus(i, "slack" if i == 1 else "PQ", 1.0, 0.0, 0.0)
                  for i in range(1, 6))
    branches = tuple(grid.Branch(i, i + 1, 0.1) for i in range(1, 5))
    case = grid.GridCase("path5", buses, branches, (grid.Generator(1, 1.0, 0.0, 0.1, 0.0),))
    with pytest.raises(topogen.GenerationExhaustedError):
        topogen.generate_removal_topology(case, 1, rng_seed=0)


def test_removal_m_validation(ieee39):
    with pytest.raises(grid.InvalidParameterError):
        topogen.generate_removal_topology(ieee39, 4, rng_seed=0)


def test_new_edge_reactance_range(ieee39, rng):
    xs = [br.x for br in ieee39.branches]
    lo, hi = min(xs), max(xs)
    for _ in range(50):
        assert lo <= topogen.new_edge_reactance(ieee39, rng) <= hi


def test_new_edge_reactance_degenerate(rng):
    case = triangle_case()
    assert topogen.new_edge_reactance(case, rng) == 0.1


def test_new_edge_reactance_deterministic(ieee39):
    a = topogen.new_edge_reactance(ieee39, np.random.default_rng(3))
    b = topogen.new_edge_reactance(ieee39, np.random.default_rng(3))
    assert a == b


def test_connectivity_invariant_over_seeds(ieee39):
    for seed in range(5):
        spec = topogen.generate_swap_topology(ieee39, rng_seed=seed)
        assert grid.is_connected(topogen.apply_topology(ieee39, spec))
    for m in (1, 2, 3):
        spec = topogen.generate_removal_topology(ieee39, m, rng_seed=m)
        assert grid.is_connected(topogen.apply_topology(ieee39, spec))


def test_distinct_seeds_distinct_specs(ieee39):
    contents = set()
    for s in range(100):
        spec = topogen.generate_swap_topology(ieee39, rng_seed=s)
        contents.add((spec.removed_edges, tuple((f, t) for f, t, _ in spec.added_edges)))
    assert len(contents) >= 99


def test_feasibility_screen_enforced(ieee39):
    spec = topogen.generate_swap_topology(ieee39, rng_seed=11)
    case = topogen.apply_topology(ieee39, spec)
    sol = powerflow.solve(case)
    assert sol.converged
    assert np.all(np.abs(powerflow.branch_angles(case, sol)) < np.pi / 2)


def test_topology_roundtrip(tmp_path, ieee39):
    spec = topogen.generate_swap_topology(ieee39, rng_seed=21)
    path = tmp_path / "t.topo"
    case = topogen.save_topology(spec, ieee39, path)
    back_spec, back_case = topogen.load_topology(path)
    assert back_spec == spec
    assert back_case == case
