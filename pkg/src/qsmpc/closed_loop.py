"""Receding-horizon orchestration of optimizer and stochastic simulation.

At each decision instant the controller solves the deterministic horizon
problem from the current conditional state, applies the resulting schedule
through the stochastic engine, and records the predicted cost J_k together
with realized fidelities.  The ensemble variant advances all paths in
lockstep, each carrying its own RNG stream and its own optimizer state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lindblad import HorizonGrid
from .model import ModelConfig
from .operators import OperatorError
from .pmp import OptimizerOptions, optimize_horizon_batch
from .trajectories import (
    EnsembleStats,
    KrausEngine,
    TrajectoryRecord,
    SimulationError,
    _aggregate,
    _draw_block,
    monte_carlo_ensemble,
    path_generators,
    spectral_decomposition,
    COLLAPSE_THRESHOLD,
    MAX_ABORT_FRACTION,
)

__all__ = [
    "ModelConfig",
    "ClosedLoopRecord",
    "run_closed_loop",
    "run_closed_loop_ensemble",
    "run_uncontrolled",
    "contraction_monitor",
]


@dataclass
class ClosedLoopRecord:
    """Per-horizon bookkeeping of one closed-loop run (or ensemble)."""

    horizon_times: np.ndarray
    predicted_costs: np.ndarray
    predicted_costs_stderr: np.ndarray
    realized_fidelity: np.ndarray
    step_times: np.ndarray
    step_fidelity: np.ndarray
    step_fidelity_stderr: np.ndarray
    gamma_estimates: np.ndarray
    applied_schedules: np.ndarray | None = None
    n_paths: int = 1
    n_aborted: int = 0
    optimizer_iterations: np.ndarray | None = None
    max_trace_dev: float = 0.0


def _shift_warm(controls, m):
    """Shift a schedule left by m substeps, padding with its last value."""
    warm = np.empty_like(controls)
    warm[:, :-m] = controls[:, m:]
    warm[:, -m:] = controls[:, -1:]
    return warm


def _run_chunk(model, opts, gens, reopt_substeps, keep_path_data, observables=None):
    h_steps = model.substeps_per_horizon
    m = reopt_substeps or h_steps
    if h_steps % m != 0 and m != h_steps:
        raise OperatorError(
            f"reopt_substeps {m} must divide the horizon ({h_steps} substeps)"
        )
    n_steps = model.n_steps
    if n_steps % m != 0:
        raise OperatorError("total steps must be a multiple of the decision spacing")
    n_dec = n_steps // m
    p = len(gens)
    # the prediction/decision grid may be coarser than the SME step; the
    # optimized values are repeated cf times when applied
    cf = opts.coarse_factor
    if h_steps % cf != 0 or m % cf != 0:
        raise OperatorError(
            f"coarse_factor {cf} must divide the horizon and decision spacing"
        )
    grid = HorizonGrid(t0=0.0, dt=model.dt * cf, steps=h_steps // cf)
    m_c = m // cf
    engine = KrausEngine(model, np.broadcast_to(model.rho0, (p, *model.rho0.shape)))
    sqrt_dt = np.sqrt(model.dt)
    observables = observables or {}

    fid = np.empty((p, n_steps + 1))
    fid[:, 0] = engine.fidelity()
    obs = {name: np.empty((p, n_steps + 1)) for name in observables}
    for name, fn in observables.items():
        obs[name][:, 0] = fn(engine.rho)
    costs = np.empty((p, n_dec))
    iters = np.zeros((p, n_dec), dtype=int)
    schedules = np.empty((p, n_dec, m)) if keep_path_data else None
    dys = np.empty((p, n_steps)) if keep_path_data else None
    controls = None
    max_trace_dev = 0.0

    for k in range(n_dec):
        rho_now = engine.rho
        cur_cost = 2.0 * (1.0 - fid[:, k * m])
        needs_opt = (cur_cost > opts.skip_converged_cost) & (~engine.aborted)
        u_coarse = np.zeros((p, grid.steps))
        if needs_opt.any():
            idx = np.flatnonzero(needs_opt)
            warm = None
            if controls is not None:
                warm = _shift_warm(controls, m_c)[idx]
            res = optimize_horizon_batch(
                rho_now[idx], model, grid, opts, warm=warm
            )
            u_coarse[idx] = res.controls
            cur_cost = cur_cost.copy()
            cur_cost[idx] = res.cost
            iters[idx, k] = res.iterations
            max_trace_dev = max(max_trace_dev, res.max_trace_dev)
        costs[:, k] = cur_cost
        controls = u_coarse
        u_block = np.repeat(u_coarse, cf, axis=1)[:, :m]
        dw_block = _draw_block(gens, m, sqrt_dt)
        block_fid, block_dy, block_obs = engine.apply_block(
            u_block, dw_block, observables
        )
        sl = slice(k * m + 1, (k + 1) * m + 1)
        fid[:, sl] = block_fid
        for name in observables:
            obs[name][:, sl] = block_obs[name]
        if keep_path_data:
            schedules[:, k, :] = u_block
            dys[:, k * m : (k + 1) * m] = block_dy
    return engine, fid, costs, iters, schedules, dys, m, n_dec, max_trace_dev, obs


def run_closed_loop_ensemble(
    model,
    opts=None,
    n_paths=1000,
    base_seed=None,
    reopt_substeps=None,
    chunk_size=256,
    observables=None,
):
    """Closed-loop SMPC over a seeded ensemble of conditional trajectories.

    Returns ``(EnsembleStats, ClosedLoopRecord)``; the record carries the
    ensemble-mean predicted cost per horizon and its contraction ratios.
    """
    opts = opts or OptimizerOptions()
    if base_seed is None:
        base_seed = model.seed
    n_steps = model.n_steps
    observables = observables or {}

    sum_f = np.zeros(n_steps + 1)
    sum_f2 = np.zeros(n_steps + 1)
    obs_sums = {
        k: [np.zeros(n_steps + 1), np.zeros(n_steps + 1)] for k in observables
    }
    sum_c = sum_c2 = None
    iter_sum = None
    decomp = spectral_decomposition(model.L)
    collapse = np.zeros(decomp.n_subspaces, dtype=int)
    n_ok = 0
    n_aborted = 0
    m = n_dec = None
    max_trace_dev = 0.0

    for start in range(0, n_paths, chunk_size):
        stop = min(start + chunk_size, n_paths)
        gens = path_generators(base_seed, stop - start, offset=start)
        engine, fid, costs, iters, _, _, m, n_dec, dev, obs = _run_chunk(
            model, opts, gens, reopt_substeps, keep_path_data=False,
            observables=observables,
        )
        max_trace_dev = max(max_trace_dev, dev)
        if sum_c is None:
            sum_c = np.zeros(n_dec)
            sum_c2 = np.zeros(n_dec)
            iter_sum = np.zeros(n_dec)
        ok = ~engine.aborted
        n_aborted += int(engine.aborted.sum())
        n_ok += int(ok.sum())
        sum_f += fid[ok].sum(axis=0)
        sum_f2 += (fid[ok] ** 2).sum(axis=0)
        for name in observables:
            obs_sums[name][0] += obs[name][ok].sum(axis=0)
            obs_sums[name][1] += (obs[name][ok] ** 2).sum(axis=0)
        sum_c += costs[ok].sum(axis=0)
        sum_c2 += (costs[ok] ** 2).sum(axis=0)
        iter_sum += iters[ok].sum(axis=0)
        pops = np.stack(
            [np.einsum("ij,pji->p", proj, engine.rho).real for proj in decomp.projectors]
        )
        for a in range(decomp.n_subspaces):
            collapse[a] += int(np.sum(pops[a][ok] > COLLAPSE_THRESHOLD))

    if n_aborted > MAX_ABORT_FRACTION * n_paths:
        raise SimulationError(
            f"{n_aborted}/{n_paths} closed-loop paths aborted"
        )
    count = max(n_ok, 1)
    mean_f, stderr_f = _aggregate(sum_f, sum_f2, count)
    mean_c, stderr_c = _aggregate(sum_c, sum_c2, count)
    times = model.dt * np.arange(n_steps + 1)
    horizon_times = model.dt * m * np.arange(n_dec)
    extras = {
        name: _aggregate(obs_sums[name][0], obs_sums[name][1], count)
        for name in observables
    }
    stats = EnsembleStats(
        times=times,
        mean_fidelity=mean_f,
        stderr_fidelity=stderr_f,
        collapse_counts=collapse,
        n_paths=n_ok,
        n_aborted=n_aborted,
        extras=extras,
    )
    record = ClosedLoopRecord(
        horizon_times=horizon_times,
        predicted_costs=mean_c,
        predicted_costs_stderr=stderr_c,
        realized_fidelity=mean_f[:: m][: n_dec],
        step_times=times,
        step_fidelity=mean_f,
        step_fidelity_stderr=stderr_f,
        gamma_estimates=_gamma_ratios(mean_c),
        n_paths=n_ok,
        n_aborted=n_aborted,
        optimizer_iterations=iter_sum / count,
        max_trace_dev=max_trace_dev,
    )
    return stats, record


def run_closed_loop(model, opts=None, seed=None, reopt_substeps=None):
    """Single-path closed-loop run; returns (TrajectoryRecord, ClosedLoopRecord)."""
    opts = opts or OptimizerOptions()
    if seed is None:
        seed = model.seed
    gens = path_generators(seed, 1)
    engine, fid, costs, iters, schedules, dys, m, n_dec, max_dev, _ = _run_chunk(
        model, opts, gens, reopt_substeps, keep_path_data=True
    )
    if engine.aborted[0]:
        raise SimulationError("closed-loop trajectory aborted")
    n_steps = model.n_steps
    times = model.dt * np.arange(n_steps + 1)
    controls = np.empty(n_steps + 1)
    controls[:-1] = schedules.reshape(-1)
    controls[-1] = controls[-2]
    dy_rec = np.empty(n_steps + 1)
    dy_rec[0] = 0.0
    dy_rec[1:] = dys[0]
    traj = TrajectoryRecord(
        times=times,
        fidelity=fid[0],
        controls=controls,
        dY=dy_rec,
        final_state=engine.rho[0].copy(),
    )
    record = ClosedLoopRecord(
        horizon_times=model.dt * m * np.arange(n_dec),
        predicted_costs=costs[0],
        predicted_costs_stderr=np.zeros(n_dec),
        realized_fidelity=fid[0, ::m][:n_dec],
        step_times=times,
        step_fidelity=fid[0],
        step_fidelity_stderr=np.zeros(n_steps + 1),
        gamma_estimates=_gamma_ratios(costs[0]),
        applied_schedules=schedules[0],
        n_paths=1,
        optimizer_iterations=iters[0].astype(float),
        max_trace_dev=max_dev,
    )
    return traj, record


def run_uncontrolled(model, n_paths, seed=None, observables=None):
    """Ensemble with u = 0 throughout; the martingale/collapse baseline."""
    if seed is None:
        seed = model.seed
    return monte_carlo_ensemble(
        model, None, n_paths, seed, observables=observables
    )


def _gamma_ratios(mean_costs, floor=1e-12):
    out = []
    for k in range(len(mean_costs) - 1):
        if mean_costs[k] < floor:
            break
        out.append(mean_costs[k + 1] / mean_costs[k])
    return np.array(out)


def contraction_monitor(record, burn_in=0, floor=1e-12):
    """Per-horizon contraction ratios of the mean predicted cost.

    Returns ``(gamma_estimates, flag)`` where ``gamma_estimates[k]`` is
    E[J_{k+1}]/E[J_k] (estimation stops once the mean cost falls below
    ``floor``, i.e. converged) and ``flag`` reports whether every ratio
    after ``burn_in`` horizons is strictly below one.  With finitely many
    paths the mean cost bottoms out at a sampling noise floor where the
    ratios jitter around one, so contraction should be monitored over the
    decrease phase (or with ``floor`` raised to that noise level).
    """
    costs = np.asarray(record.predicted_costs, dtype=float)
    if costs.size < 2:
        raise OperatorError("contraction monitor needs at least two horizons")
    gammas = _gamma_ratios(costs, floor=floor)
    tail = gammas[burn_in:]
    flag = tail.size > 0 and bool(np.max(tail) < 1.0)
    return gammas, flag
