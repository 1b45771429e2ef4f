"""Graph-embedding dynamic features (GEDFs) and dataset assembly.

The GEDF vector projects nodal transient active power through the grid's
Laplacian pseudo-inverse:

    p_t     = B diag(w) sin(B^T theta_t)
    Delta_t = Apinv p_t

Stacking one column per sample over a post-clearing window gives the n x N
feature matrix; the raw-data baseline keeps the bus angles themselves.
Matrices are normalized per sample to [-1, 1] by the maximum absolute entry
(zero matrices stay zero).  ``Delta_t`` is computed against the topology's
constant pre-fault matrices, so every column satisfies A Delta_t = p_t.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import textio
from .grid import NetworkMatrices
from .simulator import TrajectoryRecord

WINDOW_DT = 0.005
WINDOW_START = 0.20          # samples strictly after the remote clearing time
WINDOW_LENGTHS = (0.05, 0.10, 0.15, 0.20)
VARIANTS = ("gedf", "raw")
SAMPLE_FMT = "%.12g"


class InvalidInputError(ValueError):
    pass


@dataclass
class GedfSample:
    matrix: np.ndarray           # (n, N), normalized to [-1, 1]
    label: int
    topology_id: str
    scenario_id: str
    window: tuple                # (t_start, dt, n_columns)
    variant: str


@dataclass(frozen=True)
class SampleRef:
    """Lightweight handle used by split construction and manifests."""

    topology_id: str
    scenario_id: str
    path: str
    label: int


@dataclass
class DatasetSplit:
    train: list
    validation: list
    t1: list
    t2: list
    topology_partition: dict     # topology_id -> 'train' | 't2'

    def all_splits(self) -> dict:
        return {"train": self.train, "validation": self.validation,
                "t1": self.t1, "t2": self.t2}


# ---------------------------------------------------------------------------
# Core transforms
# ---------------------------------------------------------------------------

def active_power(matrices: NetworkMatrices, theta_t: np.ndarray) -> np.ndarray:
    """Nodal transient active power implied by bus angles (sums to zero)."""
    theta_t = np.asarray(theta_t, dtype=float)
    flows = matrices.weights * np.sin(matrices.incidence.T @ theta_t)
    return matrices.incidence @ flows


def gedf_vector(matrices: NetworkMatrices, p_t: np.ndarray) -> np.ndarray:
    """Project nodal power through the Laplacian pseudo-inverse."""
    return matrices.pinv @ np.asarray(p_t, dtype=float)


def normalize(matrix: np.ndarray) -> np.ndarray:
    """Scale a sample matrix into [-1, 1] by its max absolute entry."""
    peak = np.max(np.abs(matrix))
    if peak == 0.0:
        return matrix.copy()
    return matrix / peak


def window_columns(record: TrajectoryRecord, window_length_s: float) -> np.ndarray:
    """Indices of the N = window/dt samples strictly after the clearing time."""
    if window_length_s not in WINDOW_LENGTHS:
        raise InvalidInputError(
            f"window length {window_length_s} not in {WINDOW_LENGTHS}")
    n_cols = round(window_length_s / WINDOW_DT)
    idx = np.where(record.times > WINDOW_START + 1e-9)[0]
    if len(idx) < n_cols:
        raise InvalidInputError(
            f"trajectory too short for a {window_length_s}s window "
            f"({len(idx)} samples after t={WINDOW_START})")
    cols = idx[:n_cols]
    dt = np.diff(record.times[cols])
    if cols.size > 1 and not np.allclose(dt, WINDOW_DT, atol=1e-9):
        raise InvalidInputError("window samples are not uniformly spaced")
    return cols


def extract_window(record: TrajectoryRecord, matrices: NetworkMatrices,
                   window_length_s: float) -> GedfSample:
    """GEDF sample: one Delta_t column per windowed bus-angle sample."""
    cols = window_columns(record, window_length_s)
    theta = record.bus_theta[:, cols]
    mat = np.empty_like(theta)
    for k in range(theta.shape[1]):
        mat[:, k] = gedf_vector(matrices, active_power(matrices, theta[:, k]))
    return GedfSample(
        matrix=normalize(mat), label=record.label,
        topology_id=record.topology_id, scenario_id=record.scenario_id,
        window=(float(record.times[cols[0]]), WINDOW_DT, len(cols)),
        variant="gedf",
    )


def extract_raw(record: TrajectoryRecord, window_length_s: float) -> GedfSample:
    """Raw-data baseline: windowed bus angles, same normalization and metadata."""
    cols = window_columns(record, window_length_s)
    theta = record.bus_theta[:, cols]
    return GedfSample(
        matrix=normalize(theta), label=record.label,
        topology_id=record.topology_id, scenario_id=record.scenario_id,
        window=(float(record.times[cols[0]]), WINDOW_DT, len(cols)),
        variant="raw",
    )


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def _largest_remainder(targets: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation of ``total`` proportional to ``targets``."""
    if targets.sum() <= 0:
        return np.zeros(len(targets), dtype=int)
    quota = targets / targets.sum() * total
    alloc = np.floor(quota).astype(int)
    rem = quota - alloc
    short = total - alloc.sum()
    for i in np.argsort(-rem)[:short]:
        alloc[i] += 1
    return alloc


def make_splits(samples, fractions=(0.7, 0.1), rng_seed: int = 0,
                t2_topologies: int = 1) -> DatasetSplit:
    """Partition scenario samples into train/validation/T1/T2.

    ``fractions`` = (train, validation) of the *total* sample count.  T2
    holds every sample of ``t2_topologies`` randomly chosen topologies; the
    remaining topologies contribute train/validation/T1 with per-topology
    proportional allocation, so every training topology also appears in T1.
    """
    samples = list(samples)
    by_topo: dict[str, list] = {}
    for s in samples:
        by_topo.setdefault(s.topology_id, []).append(s)
    topos = sorted(by_topo)
    if len(topos) < 3:
        raise InvalidInputError("need at least 3 distinct topologies to split")
    if not 0 < fractions[0] + fractions[1] < 1:
        raise InvalidInputError("train+validation fractions must lie in (0, 1)")

    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(len(topos))
    t2_names = {topos[i] for i in order[:t2_topologies]}
    pool_names = [t for t in topos if t not in t2_names]

    total = len(samples)
    n_train = round(fractions[0] * total)
    n_val = round(fractions[1] * total)
    pool_sizes = np.array([len(by_topo[t]) for t in pool_names], dtype=float)
    if n_train + n_val + len(pool_names) > int(pool_sizes.sum()):
        raise InvalidInputError("not enough non-T2 scenarios for the requested fractions")
    train_alloc = _largest_remainder(pool_sizes, n_train)
    val_alloc = _largest_remainder(pool_sizes, n_val)

    split = DatasetSplit(train=[], validation=[], t1=[], t2=[],
                         topology_partition={t: "t2" for t in t2_names})
    for name, n_tr, n_va in zip(pool_names, train_alloc, val_alloc):
        group = sorted(by_topo[name], key=lambda s: s.scenario_id)
        perm = rng.permutation(len(group))
        shuffled = [group[i] for i in perm]
        if n_tr + n_va >= len(shuffled):
            n_va = max(0, len(shuffled) - n_tr - 1)
        split.train += shuffled[:n_tr]
        split.validation += shuffled[n_tr:n_tr + n_va]
        split.t1 += shuffled[n_tr + n_va:]
        split.topology_partition[name] = "train"
    for name in sorted(t2_names):
        split.t2 += sorted(by_topo[name], key=lambda s: s.scenario_id)
    return split


def finetune_subset(samples, fraction: float = 0.2, rng_seed: int = 0):
    """Per-topology stratified draw totalling exactly floor(fraction * N).

    Returns (subset, remainder); the remainder is the evaluation set.
    """
    samples = list(samples)
    if not samples:
        raise InvalidInputError("empty sample list")
    by_topo: dict[str, list] = {}
    for s in samples:
        by_topo.setdefault(s.topology_id, []).append(s)
    topos = sorted(by_topo)
    target = int(np.floor(fraction * len(samples)))
    sizes = np.array([len(by_topo[t]) for t in topos], dtype=float)
    alloc = _largest_remainder(sizes, target)
    rng = np.random.default_rng(rng_seed)
    subset, rest = [], []
    for name, k in zip(topos, alloc):
        group = sorted(by_topo[name], key=lambda s: s.scenario_id)
        perm = rng.permutation(len(group))
        chosen = set(perm[:k])
        subset += [group[i] for i in range(len(group)) if i in chosen]
        rest += [group[i] for i in range(len(group)) if i not in chosen]
    return subset, rest


# ---------------------------------------------------------------------------
# Sample and manifest persistence
# ---------------------------------------------------------------------------

def save_sample(sample: GedfSample, path) -> None:
    head = textio.Section("sample")
    head.kv = {
        "variant": sample.variant,
        "topology_id": sample.topology_id,
        "scenario_id": sample.scenario_id,
        "label": str(sample.label),
        "window_start": textio.fmt(float(sample.window[0])),
        "window_dt": textio.fmt(float(sample.window[1])),
        "window_n": str(int(sample.window[2])),
    }
    mat = textio.Section("matrix")
    mat.rows = [" ".join(SAMPLE_FMT % v for v in row) for row in sample.matrix]
    textio.write_sections(path, [head, mat])


def load_sample(path) -> GedfSample:
    sections = textio.read_sections(path)
    head = sections["sample"]
    matrix = np.array([[float(v) for v in row] for row in sections["matrix"].rows])
    return GedfSample(
        matrix=matrix,
        label=int(head.require("label")),
        topology_id=head.require("topology_id"),
        scenario_id=head.require("scenario_id"),
        window=(float(head.require("window_start")), float(head.require("window_dt")),
                int(head.require("window_n"))),
        variant=head.require("variant"),
    )


def sample_path(root, variant: str, topology_id: str, scenario_id: str) -> Path:
    return Path(root) / "samples" / variant / topology_id / f"{scenario_id}.rec"


def write_manifest(split: DatasetSplit, path) -> None:
    """Plain-text manifest: one relative sample path per line, a section per split."""
    sections = []
    for name, refs in split.all_splits().items():
        sec = textio.Section(name)
        sec.rows = [ref.path for ref in refs]
        sections.append(sec)
    part = textio.Section("topology_partition")
    part.rows = [f"{t} {p}" for t, p in sorted(split.topology_partition.items())]
    textio.write_sections(path, sections + [part])


def read_manifest(path, root=None) -> dict[str, list]:
    """Split name -> list of sample paths (absolute if ``root`` given)."""
    sections = textio.read_sections(path)
    out: dict[str, list] = {}
    for name in ("train", "validation", "t1", "t2"):
        rows = sections[name].rows if name in sections else []
        paths = [" ".join(r) if isinstance(r, list) else r for r in rows]
        if root is not None:
            paths = [str(Path(root) / p) for p in paths]
        out[name] = paths
    return out
