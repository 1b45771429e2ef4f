"""Incidence/Laplacian construction, the pseudo-inverse against an SVD
oracle, connectivity, and the case text format."""

import numpy as np
import pytest

from tslab import grid


def path3() -> grid.GridCase:
    buses = tuple(grid.Bus(i, "slack" if i == 1 else "PQ", 1.0, 0.0, 0.0) for i in (1, 2, 3))
    branches = (grid.Branch(1, 2, 1.0), grid.Branch(2, 3, 1.0))
    gens = (grid.Generator(1, 1.0, 0.0, 0.1, 0.0),)
    return grid.GridCase("path3", buses, branches, gens)


def triangle() -> grid.GridCase:
    buses = tuple(grid.Bus(i, "slack" if i == 1 else "PQ", 1.0, 0.0, 0.0) for i in (1, 2, 3))
    branches = (grid.Branch(1, 2, 1.0), grid.Branch(2, 3, 1.0), grid.Branch(1, 3, 1.0))
    gens = (grid.Generator(1, 1.0, 0.0, 0.1, 0.0),)
    return grid.GridCase("tri", buses, branches, gens)


# ---------------------------------------------------------------------------
# build_incidence
# ---------------------------------------------------------------------------

def test_incidence_path():
    b = grid.build_incidence(path3())
    assert np.array_equal(b, np.array([[-1, 0], [1, -1], [0, 1]], dtype=float))


def test_incidence_single_edge():
    case = path3()
    case = grid.GridCase(case.id, case.buses[:2], (grid.Branch(1, 2, 1.0),), case.generators)
    case = grid.GridCase(case.id,
                         tuple(grid.Bus(i, "slack" if i == 1 else "PQ", 1.0, 0, 0) for i in (1, 2)),
                         (grid.Branch(1, 2, 1.0),), case.generators)
    b = grid.build_incidence(case)
    assert np.array_equal(b, np.array([[-1], [1]], dtype=float))


def test_incidence_columns_sum_to_zero(rng):
    case = grid.random_connected_case(17, rng)
    b = grid.build_incidence(case)
    assert np.all(b.sum(axis=0) == 0)
    assert np.all(np.abs(b).sum(axis=0) == 2)


def test_invalid_cases_rejected():
    buses = tuple(grid.Bus(i, "slack" if i == 1 else "PQ", 1.0, 0, 0) for i in (1, 2, 3))
    gens = (grid.Generator(1, 1.0, 0.0, 0.1, 0.0),)
    with pytest.raises(grid.InvalidCaseError):
        grid.validate(grid.GridCase("x", buses, (grid.Branch(2, 2, 1.0), grid.Branch(1, 2, 1.0),
                                                 grid.Branch(1, 3, 1.0)), gens))
    with pytest.raises(grid.InvalidCaseError):
        grid.validate(grid.GridCase("x", buses, (grid.Branch(1, 2, 1.0), grid.Branch(2, 1, 2.0),
                                                 grid.Branch(2, 3, 1.0)), gens))
    with pytest.raises(grid.InvalidCaseError):
        grid.validate(grid.GridCase("x", buses, (grid.Branch(1, 2, -0.5), grid.Branch(2, 3, 1.0)), gens))
    with pytest.raises(grid.InvalidCaseError):  # disconnected
        grid.validate(grid.GridCase("x", buses, (grid.Branch(1, 2, 1.0),), gens))


# ---------------------------------------------------------------------------
# build_laplacian
# ---------------------------------------------------------------------------

def test_laplacian_two_node():
    buses = tuple(grid.Bus(i, "slack" if i == 1 else "PQ", 1.0, 0, 0) for i in (1, 2))
    case = grid.GridCase("two", buses, (grid.Branch(1, 2, 1.0),),
                         (grid.Generator(1, 1.0, 0.0, 0.1, 0.0),))
    mats = grid.build_laplacian(case, np.ones(2))
    assert np.allclose(mats.laplacian, [[1, -1], [-1, 1]])
    assert mats.rank == 1


def test_laplacian_triangle():
    mats = grid.build_laplacian(triangle(), np.ones(3))
    assert np.allclose(mats.laplacian, [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])


def test_laplacian_psd_random(rng):
    for _ in range(10):
        case = grid.random_connected_case(int(rng.integers(5, 30)), rng)
        volt = rng.uniform(0.9, 1.1, case.n)
        mats = grid.build_laplacian(case, volt)
        eig = np.linalg.eigvalsh(mats.laplacian)
        assert eig.min() > -1e-10
        assert abs(eig[0]) < 1e-10
        assert np.allclose(mats.laplacian @ np.ones(case.n), 0, atol=1e-10)
        assert np.allclose(mats.pinv @ np.ones(case.n), 0, atol=1e-10)


def test_laplacian_rejects_bad_voltage():
    with pytest.raises(grid.InvalidParameterError):
        grid.build_laplacian(triangle(), np.array([1.0, -1.0, 1.0]))


# ---------------------------------------------------------------------------
# pseudo_inverse vs brute-force SVD oracle
# ---------------------------------------------------------------------------

def test_pinv_two_node_worked_value():
    a = np.array([[1.0, -1.0], [-1.0, 1.0]])
    expected = np.linalg.pinv(a)          # SVD oracle
    assert np.allclose(expected, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-12)
    assert np.allclose(grid.pseudo_inverse(a), expected, atol=1e-12)


def test_pinv_identity_and_zero():
    assert np.allclose(grid.pseudo_inverse(np.eye(4)), np.eye(4), atol=1e-12)
    assert np.allclose(grid.pseudo_inverse(np.zeros((3, 3))), 0.0, atol=1e-15)


def test_pinv_oracle_100_random_graphs(rng):
    for _ in range(100):
        case = grid.random_connected_case(int(rng.integers(5, 41)), rng)
        mats = grid.build_laplacian(case, rng.uniform(0.9, 1.1, case.n))
        oracle = np.linalg.pinv(mats.laplacian)
        num = np.linalg.norm(mats.pinv - oracle)
        den = max(np.linalg.norm(oracle), 1e-12)
        assert num / den < 1e-8
        assert mats.rank == case.n - 1


def test_pinv_moore_penrose_axioms(rng):
    for _ in range(20):
        case = grid.random_connected_case(int(rng.integers(5, 35)), rng)
        mats = grid.build_laplacian(case, rng.uniform(0.9, 1.1, case.n))
        a, ap = mats.laplacian, mats.pinv
        scale = np.linalg.norm(a)
        assert np.linalg.norm(a @ ap @ a - a) / scale < 1e-8
        assert np.linalg.norm(ap @ a @ ap - ap) / max(np.linalg.norm(ap), 1e-12) < 1e-8
        assert np.linalg.norm((a @ ap) - (a @ ap).T) < 1e-8
        assert np.linalg.norm((ap @ a) - (ap @ a).T) < 1e-8


def test_pinv_requires_symmetry():
    with pytest.raises(grid.InvalidParameterError):
        grid.pseudo_inverse(np.array([[1.0, 2.0], [0.0, 1.0]]))


# ---------------------------------------------------------------------------
# is_connected
# ---------------------------------------------------------------------------

def test_connectivity_examples(ieee39):
    assert grid.is_connected(path3(), removed_edges=(1,)) is False
    for l in range(3):
        assert grid.is_connected(triangle(), removed_edges=(l,)) is True
    assert grid.is_connected(ieee39) is True


# ---------------------------------------------------------------------------
# permutation equivariance
# ---------------------------------------------------------------------------

def test_permutation_equivariance(rng):
    for _ in range(10):
        case = grid.random_connected_case(int(rng.integers(5, 25)), rng)
        volt = rng.uniform(0.9, 1.1, case.n)
        mats = grid.build_laplacian(case, volt)
        perm = rng.permutation(case.n)
        pcase = grid.permute_case(case, perm)
        pvolt = np.empty_like(volt)
        pvolt[perm] = volt
        pmats = grid.build_laplacian(pcase, pvolt)
        pi = np.zeros((case.n, case.n))
        pi[perm, np.arange(case.n)] = 1.0
        assert np.allclose(pmats.laplacian, pi @ mats.laplacian @ pi.T, atol=1e-10)
        assert np.allclose(pmats.pinv, pi @ mats.pinv @ pi.T, atol=1e-10)


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def test_case_roundtrip(tmp_path, ieee39):
    path = tmp_path / "case.case"
    grid.save_case(ieee39, path)
    back = grid.load_case_file(path)
    assert back == ieee39
    # canonical form is stable
    path2 = tmp_path / "case2.case"
    grid.save_case(back, path2)
    assert path.read_text() == path2.read_text()
