"""Time-domain simulation of post-fault rotor-angle dynamics.

Classical multimachine model: each generator is a constant EMF behind its
transient reactance, loads are constant shunt admittances frozen at the
pre-fault operating point, and the network is algebraic.  At every
right-hand-side evaluation the bus voltages are recovered from the
generator EMFs by one sparse-free LU solve of ``Y V = I(delta)``; the swing
equations

    M_i d2delta_i/dt2 = P_m,i - P_e,i(delta) - D_i ddelta_i/dt

are integrated with fixed-step RK4 on the two-rate sampling grid (0.005 s
up to 2 s, 0.01 s thereafter, horizon 10 s).

A three-phase branch fault is played in stages: the fault shunt (magnitude
1e6 p.u., purely reactive) is applied at the faulted end's bus at
``t_apply``; the breaker at that end opens at ``t_clear_near`` (the branch
drops out of the network while the shunt persists); the remote breaker
opens at ``t_clear_remote``, removing the shunt.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import textio
from .grid import GridCase, InvalidParameterError, is_connected
from .powerflow import PowerFlowSolution, generator_dispatch
from .topogen import TopologySpec

log = logging.getLogger(__name__)

T_END = 10.0
STEP_SCHEDULE = ((0.0, 2.0, 0.005), (2.0, 10.0, 0.01))
FAULT_ADMITTANCE = -1e6j      # bolted three-phase fault shunt, p.u.
BLOWUP_OMEGA = 1e3            # rad/s; beyond this the run stops early
RECORD_FMT = "%.12g"


class ScenarioInvalidError(RuntimeError):
    """The scenario cannot be simulated (infeasible flow, split network, ...)."""


@dataclass(frozen=True)
class FaultSpec:
    """Three-phase-to-ground fault on one branch.

    ``faulted_end`` picks the end of the branch that carries the fault
    ('near' = the from-bus, 'remote' = the to-bus).  The breaker at the
    faulted bus opens at ``t_clear_near``; the far breaker opens at
    ``t_clear_remote``.
    """

    faulted_branch: int
    faulted_end: str = "near"
    t_apply: float = 0.10
    t_clear_near: float = 0.19
    t_clear_remote: float = 0.20

    def __post_init__(self):
        if self.faulted_end not in ("near", "remote"):
            raise InvalidParameterError(f"unknown faulted end {self.faulted_end!r}")
        if not self.t_apply < self.t_clear_near < self.t_clear_remote:
            raise InvalidParameterError("fault schedule must satisfy apply < near < remote")

    def fault_bus(self, case: GridCase) -> int:
        br = case.branches[self.faulted_branch]
        return (br.from_bus if self.faulted_end == "near" else br.to_bus) - 1


@dataclass(frozen=True)
class Scenario:
    topology: TopologySpec
    load_scale: np.ndarray
    fault: FaultSpec | None
    seed: int
    scenario_id: str = "s0000"


@dataclass
class TrajectoryRecord:
    times: np.ndarray          # (T,) sample instants, s
    bus_theta: np.ndarray      # (n, T) bus voltage angles, rad
    rotor_delta: np.ndarray    # (g, T) rotor angles, rad
    gen_buses: tuple           # 1-based bus ids, one per generator
    topology_id: str
    scenario_id: str
    seed: int
    load_scale: np.ndarray
    fault: FaultSpec | None
    label: int
    tsi: float
    early_stop: bool = False


# ---------------------------------------------------------------------------
# Model construction
# ---------------------------------------------------------------------------

@dataclass
class DynamicModel:
    """Machines plus the per-phase bus admittance matrices."""

    n_bus: int
    gen_bus: np.ndarray        # (g,) 0-based bus index per machine
    e_mag: np.ndarray          # (g,) EMF magnitudes
    y_gen: np.ndarray          # (g,) complex 1/(j x'd)
    m: np.ndarray              # (g,) inertia
    d: np.ndarray              # (g,) damping
    p_m: np.ndarray            # (g,) mechanical power
    delta0: np.ndarray         # (g,) initial rotor angles
    omega0: np.ndarray         # (g,) initial speed deviations, rad/s
    phases: list               # list of (n, n) complex admittance matrices
    events: list               # sorted [(t_start, phase_index)], first at t=0

    _lu: dict = field(default_factory=dict, repr=False)

    def factorization(self, phase: int):
        if phase not in self._lu:
            self._lu[phase] = lu_factor(self.phases[phase], check_finite=False)
        return self._lu[phase]

    def bus_voltages(self, phase: int, delta: np.ndarray) -> np.ndarray:
        """Complex bus voltages for given rotor angles under one network phase."""
        inj = np.zeros(self.n_bus, dtype=complex)
        emf = self.e_mag * np.exp(1j * delta)
        np.add.at(inj, self.gen_bus, emf * self.y_gen)
        return lu_solve(self.factorization(phase), inj, check_finite=False)

    def electrical_power(self, phase: int, delta: np.ndarray,
                         voltages: np.ndarray | None = None) -> np.ndarray:
        if voltages is None:
            voltages = self.bus_voltages(phase, delta)
        emf = self.e_mag * np.exp(1j * delta)
        i_gen = (emf - voltages[self.gen_bus]) * self.y_gen
        return np.real(emf * np.conj(i_gen))

    def reduced_admittance(self, phase: int) -> np.ndarray:
        """Kron reduction of one phase to the machine internal nodes.

        ``Y_red = diag(y_gen) - C Y_bus^-1 C^T`` with C the internal-to-bus
        coupling.  For a network without conductances its real part is zero
        and the classical energy function is conserved when D = 0.
        """
        g = len(self.gen_bus)
        c = np.zeros((g, self.n_bus), dtype=complex)
        c[np.arange(g), self.gen_bus] = -self.y_gen
        inner = lu_solve(self.factorization(phase), c.T, check_finite=False)
        return np.diag(self.y_gen) - c @ inner


def classical_energy(model: DynamicModel, phase: int, delta: np.ndarray,
                     omega: np.ndarray) -> float:
    """Energy function of the reduced lossless system (valid when G_red = 0)."""
    y_red = model.reduced_admittance(phase)
    b = y_red.imag
    kinetic = 0.5 * float(np.sum(model.m * omega**2))
    mech = -float(np.sum(model.p_m * delta))
    cij = np.outer(model.e_mag, model.e_mag) * b
    dd = delta[:, None] - delta[None, :]
    coupling = -0.5 * float(np.sum(cij * np.cos(dd))) + 0.5 * float(np.trace(cij))
    return kinetic + mech + coupling


def network_admittance(case: GridCase, load_scale: np.ndarray,
                       sol: PowerFlowSolution, removed_branch: int | None = None,
                       fault_bus: int | None = None,
                       include_gen_shunts: bool = True) -> np.ndarray:
    """Bus admittance matrix with constant-admittance loads for one network phase."""
    n = case.n
    y = np.zeros((n, n), dtype=complex)
    for l, br in enumerate(case.branches):
        if l == removed_branch:
            continue
        i, j = br.from_bus - 1, br.to_bus - 1
        yb = 1.0 / (1j * br.x)
        y[i, i] += yb
        y[j, j] += yb
        y[i, j] -= yb
        y[j, i] -= yb
    for b in case.buses:
        i = b.id - 1
        s = load_scale[i]
        p, q = b.pload * s, b.qload * s
        if p != 0.0 or q != 0.0:
            y[i, i] += (p - 1j * q) / sol.vmag[i] ** 2
    if include_gen_shunts:
        for gen in case.generators:
            y[gen.bus - 1, gen.bus - 1] += 1.0 / (1j * gen.xd_prime)
    if fault_bus is not None:
        y[fault_bus, fault_bus] += FAULT_ADMITTANCE
    return y


def build_dynamic_model(case: GridCase, sol: PowerFlowSolution,
                        load_scale: np.ndarray,
                        fault: FaultSpec | None) -> DynamicModel:
    """Initialize machines from a converged power flow and assemble the phases."""
    if not sol.converged:
        raise ScenarioInvalidError("power flow did not converge")
    if len(case.generators) < 1:
        raise ScenarioInvalidError("case has no generators")

    p_gen, q_gen = generator_dispatch(case, sol, load_scale)
    gen_bus = np.array([g.bus - 1 for g in case.generators])
    u = sol.vmag[gen_bus] * np.exp(1j * sol.theta[gen_bus])
    s_gen = p_gen + 1j * q_gen
    i_gen = np.conj(s_gen / u)
    xdp = np.array([g.xd_prime for g in case.generators])
    emf = u + 1j * xdp * i_gen

    phases = [network_admittance(case, load_scale, sol)]
    events: list[tuple[float, int]] = [(0.0, 0)]
    if fault is not None:
        if not 0 <= fault.faulted_branch < len(case.branches):
            raise ScenarioInvalidError(f"no branch with index {fault.faulted_branch}")
        if not is_connected(case, removed_edges=(fault.faulted_branch,)):
            raise ScenarioInvalidError("post-fault network is disconnected")
        fb = fault.fault_bus(case)
        phases.append(network_admittance(case, load_scale, sol, fault_bus=fb))
        phases.append(network_admittance(case, load_scale, sol,
                                         removed_branch=fault.faulted_branch, fault_bus=fb))
        phases.append(network_admittance(case, load_scale, sol,
                                         removed_branch=fault.faulted_branch))
        events += [(fault.t_apply, 1), (fault.t_clear_near, 2), (fault.t_clear_remote, 3)]

    return DynamicModel(
        n_bus=case.n,
        gen_bus=gen_bus,
        e_mag=np.abs(emf),
        y_gen=1.0 / (1j * xdp),
        m=np.array([g.m for g in case.generators]),
        d=np.array([g.d for g in case.generators]),
        p_m=p_gen,
        delta0=np.angle(emf),
        omega0=np.zeros(len(case.generators)),
        phases=phases,
        events=events,
    )


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------

def sample_times(schedule=STEP_SCHEDULE, t_end: float = T_END) -> np.ndarray:
    """The two-rate sampling grid, endpoints included once."""
    times = [0.0]
    for t0, t1, dt in schedule:
        t1 = min(t1, t_end)
        if t1 <= t0:
            continue
        steps = round((t1 - t0) / dt)
        times.extend(t0 + k * dt for k in range(1, steps + 1))
        if t1 >= t_end:
            break
    return np.array(times)


def integrate_model(model: DynamicModel, schedule=STEP_SCHEDULE, t_end: float = T_END):
    """Fixed-step RK4 over the sampling grid with phase switching at events.

    Returns ``(times, bus_theta, delta, omega, early_stop)``; trajectories are
    truncated if any machine speed exceeds the blow-up threshold.
    """
    times = sample_times(schedule, t_end)
    n_t = len(times)
    g = len(model.gen_bus)
    event_times = [t for t, _ in model.events]
    event_phase = [p for _, p in model.events]

    def phase_at(t: float) -> int:
        idx = 0
        for k, te in enumerate(event_times):
            if t >= te - 1e-12:
                idx = k
        return event_phase[idx]

    delta = np.empty((g, n_t))
    omega = np.empty((g, n_t))
    bus_theta = np.empty((model.n_bus, n_t))

    state = np.concatenate([model.delta0, model.omega0])

    def rhs(phase: int, s: np.ndarray, want_v: bool = False):
        dl, om = s[:g], s[g:]
        v = model.bus_voltages(phase, dl)
        pe = model.electrical_power(phase, dl, v)
        acc = (model.p_m - pe - model.d * om) / model.m
        out = np.concatenate([om, acc])
        return (out, v) if want_v else out

    early_stop = False
    last = n_t - 1
    for k in range(n_t - 1):
        t, t_next = times[k], times[k + 1]
        dt = t_next - t
        phase = phase_at(t + 0.5 * dt)
        k1, v = rhs(phase, state, want_v=True)
        delta[:, k] = state[:g]
        omega[:, k] = state[g:]
        bus_theta[:, k] = np.angle(v)
        k2 = rhs(phase, state + 0.5 * dt * k1)
        k3 = rhs(phase, state + 0.5 * dt * k2)
        k4 = rhs(phase, state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.max(np.abs(state[g:])) > BLOWUP_OMEGA:
            early_stop = True
            last = k + 1
            break

    final_phase = phase_at(times[last] + 1e-12)
    delta[:, last] = state[:g]
    omega[:, last] = state[g:]
    bus_theta[:, last] = np.angle(model.bus_voltages(final_phase, state[:g]))

    sl = slice(0, last + 1)
    return times[sl], bus_theta[:, sl], delta[:, sl], omega[:, sl], early_stop


def tsi(rotor_delta_final: np.ndarray) -> tuple[float, int]:
    """Transient stability index and label from the final rotor angles.

    eta = (2*pi - |dmax|) / (2*pi + |dmax|) with dmax the largest pairwise
    rotor-angle separation; the system is stable (label 1) iff eta > 0.
    """
    d = np.asarray(rotor_delta_final, dtype=float)
    if d.ndim != 1 or d.size < 2:
        raise InvalidParameterError("need rotor angles of at least two machines")
    dmax = float(np.max(d) - np.min(d))
    eta = (2.0 * math.pi - abs(dmax)) / (2.0 * math.pi + abs(dmax))
    return eta, int(eta > 0)


def simulate(case: GridCase, scenario: Scenario, sol: PowerFlowSolution | None = None) -> TrajectoryRecord:
    """Simulate one scenario on an already-materialized topology case."""
    from . import powerflow

    load_scale = np.asarray(scenario.load_scale, dtype=float)
    if sol is None:
        sol = powerflow.solve(case, load_scale)
    if not sol.converged:
        raise ScenarioInvalidError("power flow did not converge for this scenario")
    model = build_dynamic_model(case, sol, load_scale, scenario.fault)
    times, bus_theta, delta, omega, early = integrate_model(model)
    eta, label = tsi(delta[:, -1])
    if early:
        label = 0
    return TrajectoryRecord(
        times=times,
        bus_theta=bus_theta,
        rotor_delta=delta,
        gen_buses=tuple(g.bus for g in case.generators),
        topology_id=scenario.topology.topology_id,
        scenario_id=scenario.scenario_id,
        seed=scenario.seed,
        load_scale=load_scale,
        fault=scenario.fault,
        label=label,
        tsi=eta,
        early_stop=early,
    )


# ---------------------------------------------------------------------------
# Record persistence (one record per file)
# ---------------------------------------------------------------------------

def _matrix_rows(mat: np.ndarray) -> list[str]:
    return [" ".join(RECORD_FMT % v for v in row) for row in np.atleast_2d(mat)]


def save_record(record: TrajectoryRecord, path) -> None:
    head = textio.Section("record")
    head.kv = {
        "topology_id": record.topology_id,
        "scenario_id": record.scenario_id,
        "seed": str(record.seed),
        "label": str(record.label),
        "tsi": textio.fmt(float(record.tsi)),
        "early_stop": "1" if record.early_stop else "0",
        "n_bus": str(record.bus_theta.shape[0]),
        "n_gen": str(record.rotor_delta.shape[0]),
        "n_samples": str(len(record.times)),
        "gen_buses": " ".join(str(b) for b in record.gen_buses),
        "step_schedule": "; ".join(f"{dt} on [{t0},{t1}]" for t0, t1, dt in STEP_SCHEDULE),
    }
    if record.fault is not None:
        head.kv.update({
            "fault_branch": str(record.fault.faulted_branch),
            "fault_end": record.fault.faulted_end,
            "t_apply": textio.fmt(record.fault.t_apply),
            "t_clear_near": textio.fmt(record.fault.t_clear_near),
            "t_clear_remote": textio.fmt(record.fault.t_clear_remote),
        })
    sections = [head]
    for name, mat in (("load_scale", record.load_scale[None, :]),
                      ("times", record.times[None, :]),
                      ("bus_theta", record.bus_theta),
                      ("rotor_delta", record.rotor_delta)):
        sec = textio.Section(name)
        sec.rows = _matrix_rows(np.asarray(mat))
        sections.append(sec)
    textio.write_sections(path, sections)


def _block(sections: dict, name: str) -> np.ndarray:
    return np.array([[float(v) for v in row] for row in sections[name].rows])


def load_record(path) -> TrajectoryRecord:
    sections = textio.read_sections(path)
    head = sections["record"]
    fault = None
    if "fault_branch" in head.kv:
        fault = FaultSpec(
            faulted_branch=int(head.kv["fault_branch"]),
            faulted_end=head.kv["fault_end"],
            t_apply=float(head.kv["t_apply"]),
            t_clear_near=float(head.kv["t_clear_near"]),
            t_clear_remote=float(head.kv["t_clear_remote"]),
        )
    return TrajectoryRecord(
        times=_block(sections, "times").ravel(),
        bus_theta=_block(sections, "bus_theta"),
        rotor_delta=_block(sections, "rotor_delta"),
        gen_buses=tuple(int(b) for b in head.require("gen_buses").split()),
        topology_id=head.require("topology_id"),
        scenario_id=head.require("scenario_id"),
        seed=int(head.get("seed", "0")),
        load_scale=_block(sections, "load_scale").ravel(),
        fault=fault,
        label=int(head.require("label")),
        tsi=float(head.require("tsi")),
        early_stop=head.get("early_stop", "0") == "1",
    )


class RecordStore:
    """Append-only directory of trajectory records, one file per scenario."""

    def __init__(self, root):
        self.root = Path(root)

    def path_for(self, topology_id: str, scenario_id: str) -> Path:
        return self.root / topology_id / f"{scenario_id}.rec"

    def save(self, record: TrajectoryRecord) -> Path:
        path = self.path_for(record.topology_id, record.scenario_id)
        save_record(record, path)
        return path

    def list_records(self) -> list[Path]:
        return sorted(self.root.glob("*/*.rec"))


# ---------------------------------------------------------------------------
# Campaigns
# ---------------------------------------------------------------------------

def derive_seed(*keys) -> int:
    """Stable 64-bit seed from integer keys (documented master-seed fan-out)."""
    words = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint32)
    return int(words[0]) << 32 | int(words[1])


def eligible_fault_branches(case: GridCase, transformer_keys=frozenset()) -> list[int]:
    """Branch indices that may carry a fault.

    Excluded: transformer branches connecting generator buses (identified by
    their endpoint pairs in ``transformer_keys``), and bridges, whose removal
    would split the post-fault network.
    """
    gen_buses = case.generator_buses()
    out = []
    for l, br in enumerate(case.branches):
        if br.key() in transformer_keys and (br.from_bus in gen_buses or br.to_bus in gen_buses):
            continue
        if not is_connected(case, removed_edges=(l,)):
            continue
        out.append(l)
    return out


def plan_scenarios(topo: TopologySpec, case: GridCase, load_draws,
                   branches, ends=("near", "remote"), seed: int = 0) -> list[Scenario]:
    """Full Cartesian sweep of (load draw, faulted branch, faulted end)."""
    scenarios = []
    k = 0
    for ls in load_draws:
        for br in branches:
            for end in ends:
                scenarios.append(Scenario(
                    topology=topo, load_scale=np.asarray(ls, dtype=float),
                    fault=FaultSpec(faulted_branch=br, faulted_end=end),
                    seed=derive_seed(seed, k), scenario_id=f"s{k:04d}"))
                k += 1
    return scenarios


def sample_scenarios(topo: TopologySpec, case: GridCase, count: int,
                     load_range: tuple[float, float], seed: int,
                     transformer_keys=frozenset()) -> list[Scenario]:
    """Draw ``count`` scenarios: shuffled (branch, end) pairs cycled, a fresh
    load draw for each.  Deterministic per seed."""
    from . import powerflow

    pairs = [(br, end) for br in eligible_fault_branches(case, transformer_keys)
             for end in ("near", "remote")]
    if not pairs:
        raise ScenarioInvalidError("no eligible fault branches")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFA17]))
    order = rng.permutation(len(pairs))
    scenarios = []
    for k in range(count):
        br, end = pairs[order[k % len(pairs)]]
        ls = powerflow.scale_loads(case, load_range[0], load_range[1], derive_seed(seed, 1, k))
        scenarios.append(Scenario(
            topology=topo, load_scale=ls,
            fault=FaultSpec(faulted_branch=int(br), faulted_end=end),
            seed=derive_seed(seed, 2, k), scenario_id=f"s{k:04d}"))
    return scenarios


def _simulate_to_store(args):
    case, scenario, root = args
    store = RecordStore(root)
    try:
        record = simulate(case, scenario)
    except Exception as exc:  # noqa: BLE001 - campaign must survive any one failure
        return (scenario.topology.topology_id, scenario.scenario_id, None, repr(exc))
    store.save(record)
    return (scenario.topology.topology_id, scenario.scenario_id, record.label, "")


@dataclass
class CampaignSummary:
    total: int
    succeeded: int
    failed: int
    stable: int
    unstable: int
    failures: list

    @property
    def success_rate(self) -> float:
        return self.succeeded / self.total if self.total else 0.0


def run_campaign(jobs, store_root, workers: int = 1) -> CampaignSummary:
    """Simulate (case, scenario) jobs, streaming records to the store.

    Individual failures are logged and skipped; order of execution never
    affects the on-disk result (one deterministic file per scenario).
    """
    args = [(case, scen, str(store_root)) for case, scen in jobs]
    if workers > 1:
        import concurrent.futures as cf
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_to_store, args, chunksize=1))
    else:
        results = [_simulate_to_store(a) for a in args]

    failures = [(t, s, msg) for t, s, lab, msg in results if lab is None]
    stable = sum(1 for _, _, lab, _ in results if lab == 1)
    unstable = sum(1 for _, _, lab, _ in results if lab == 0)
    for t, s, msg in failures:
        log.warning("scenario %s/%s failed: %s", t, s, msg)
    return CampaignSummary(
        total=len(results), succeeded=len(results) - len(failures),
        failed=len(failures), stable=stable, unstable=unstable, failures=failures,
    )
