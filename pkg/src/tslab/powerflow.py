"""Lossless AC power flow solved by Newton-Raphson.

With series resistance neglected the balance equations reduce to

    P_i = sum_j V_i V_j y_ij sin(theta_i - theta_j)
    Q_i = V_i^2 sum_j y_ij - sum_j V_i V_j y_ij cos(theta_i - theta_j)

with y_ij = 1/x_ij over the branches at bus i.  The solver iterates from a
flat start on the polar mismatch equations; PV buses hold V at their
setpoint, the slack bus holds (V, theta).  Convergence failure is reported
in the result, not raised: infeasible operating points are a normal outcome
of the topology screening that calls this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridCase, InvalidParameterError, NumericalError

MAX_ITERATIONS = 50
TOLERANCE = 1e-8


@dataclass(frozen=True)
class PowerFlowSolution:
    theta: np.ndarray        # bus voltage angles, rad (slack = 0)
    vmag: np.ndarray         # bus voltage magnitudes, p.u.
    p_inj: np.ndarray        # net active injections, p.u.
    q_inj: np.ndarray        # net reactive injections, p.u.
    converged: bool
    iterations: int
    max_mismatch: float


def admittance(case: GridCase) -> np.ndarray:
    """Symmetric y_ij = 1/x_ij matrix (zero diagonal, zero where no branch)."""
    y = np.zeros((case.n, case.n))
    for br in case.branches:
        i, j = br.from_bus - 1, br.to_bus - 1
        y[i, j] += 1.0 / br.x
        y[j, i] += 1.0 / br.x
    return y


def injections(y: np.ndarray, theta: np.ndarray, vmag: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Active/reactive injections implied by a voltage profile."""
    vv = np.outer(vmag, vmag) * y
    dth = theta[:, None] - theta[None, :]
    p = np.sum(vv * np.sin(dth), axis=1)
    q = vmag**2 * np.sum(y, axis=1) - np.sum(vv * np.cos(dth), axis=1)
    return p, q


def scheduled_injections(case: GridCase, load_scale: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Specified net P (all buses) and net Q (load side only), p.u."""
    p = np.zeros(case.n)
    q = np.zeros(case.n)
    for b in case.buses:
        s = load_scale[b.id - 1]
        p[b.id - 1] -= b.pload * s
        q[b.id - 1] -= b.qload * s
    for g in case.generators:
        p[g.bus - 1] += g.pm
    return p, q


def scale_loads(case: GridCase, low: float, high: float, rng_seed) -> np.ndarray:
    """Per-bus uniform load-scaling factors in [low, high]; 1.0 at load-free buses."""
    if not 0 < low <= high:
        raise InvalidParameterError("need 0 < low <= high")
    rng = np.random.default_rng(rng_seed)
    factors = np.ones(case.n)
    for b in case.buses:
        if b.pload != 0.0 or b.qload != 0.0:
            factors[b.id - 1] = rng.uniform(low, high)
    return factors


def solve(case: GridCase, load_scale=None) -> PowerFlowSolution:
    """Newton-Raphson from a flat start; at most 50 iterations, tolerance 1e-8."""
    n = case.n
    if load_scale is None:
        load_scale = np.ones(n)
    load_scale = np.asarray(load_scale, dtype=float)
    if load_scale.shape != (n,):
        raise InvalidParameterError(f"expected {n} load-scale factors")
    if np.any(load_scale <= 0) or np.any(load_scale > 2):
        raise InvalidParameterError("load-scale factors must lie in (0, 2]")

    y = admittance(case)
    slack = case.slack_index()
    types = [b.type for b in case.buses]
    pv = [i for i, t in enumerate(types) if t == "PV"]
    pq = [i for i, t in enumerate(types) if t == "PQ"]
    pvpq = sorted(pv + pq)

    p_spec, q_spec = scheduled_injections(case, load_scale)

    theta = np.zeros(n)
    vmag = np.array([b.vset if b.type in ("slack", "PV") else 1.0 for b in case.buses])

    n_th = len(pvpq)
    converged = False
    iterations = 0
    max_mismatch = np.inf
    for iterations in range(1, MAX_ITERATIONS + 1):
        p_calc, q_calc = injections(y, theta, vmag)
        dp = p_spec[pvpq] - p_calc[pvpq]
        dq = q_spec[pq] - q_calc[pq]
        mism = np.concatenate([dp, dq])
        max_mismatch = float(np.max(np.abs(mism))) if mism.size else 0.0
        if max_mismatch < TOLERANCE:
            converged = True
            break

        jac = _jacobian(y, theta, vmag, pvpq, pq)
        try:
            step = np.linalg.solve(jac, mism)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular power-flow Jacobian: {exc}") from exc
        if not np.all(np.isfinite(step)):
            break
        theta[pvpq] += step[:n_th]
        vmag[pq] += step[n_th:]
        if np.any(vmag <= 0):
            break  # voltage collapse; report as non-converged

    theta = theta - theta[slack]
    p_calc, q_calc = injections(y, theta, vmag)
    return PowerFlowSolution(
        theta=theta, vmag=vmag, p_inj=p_calc, q_inj=q_calc,
        converged=converged, iterations=iterations, max_mismatch=max_mismatch,
    )


def _jacobian(y, theta, vmag, pvpq, pq):
    """Polar-form Jacobian of the lossless mismatch equations."""
    vv = np.outer(vmag, vmag) * y
    dth = theta[:, None] - theta[None, :]
    s, c = np.sin(dth), np.cos(dth)

    # dP/dtheta
    h = -vv * c
    np.fill_diagonal(h, np.sum(vv * c, axis=1) - np.diag(vv * c))
    # dP/dV
    nmat = vmag[:, None] * y * s
    np.fill_diagonal(nmat, np.sum(vmag[None, :] * y * s, axis=1))
    # dQ/dtheta
    j = -vv * s
    np.fill_diagonal(j, np.sum(vv * s, axis=1) - np.diag(vv * s))
    # dQ/dV
    l = -vmag[:, None] * y * c
    np.fill_diagonal(
        l, 2.0 * vmag * np.sum(y, axis=1) - np.sum(vmag[None, :] * y * c, axis=1)
    )

    top = np.hstack([h[np.ix_(pvpq, pvpq)], nmat[np.ix_(pvpq, pq)]])
    bot = np.hstack([j[np.ix_(pq, pvpq)], l[np.ix_(pq, pq)]])
    return np.vstack([top, bot])


def generator_dispatch(case: GridCase, sol: PowerFlowSolution,
                       load_scale=None) -> tuple[np.ndarray, np.ndarray]:
    """Converged generator outputs (P, Q) per generator, p.u.

    The generator at a bus supplies the net injection plus the local
    (scaled) load; mechanical power for simulation is taken from this P.
    """
    n = case.n
    if load_scale is None:
        load_scale = np.ones(n)
    p = np.empty(len(case.generators))
    q = np.empty(len(case.generators))
    for k, g in enumerate(case.generators):
        i = g.bus - 1
        bus = case.buses[i]
        s = load_scale[i]
        p[k] = sol.p_inj[i] + bus.pload * s
        q[k] = sol.q_inj[i] + bus.qload * s
    return p, q


def branch_angles(case: GridCase, sol: PowerFlowSolution) -> np.ndarray:
    """Angle difference across every branch (from minus to), rad."""
    th = sol.theta
    return np.array([th[br.from_bus - 1] - th[br.to_bus - 1] for br in case.branches])
