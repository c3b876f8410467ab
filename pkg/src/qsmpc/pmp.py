"""Horizon optimizer: reduced terminal cost, switching function, descent.

The receding-horizon problem collapses to minimizing the deterministic
terminal cost 2(1 - Tr(rho(t + Delta t; u) P_f)) over bounded
piecewise-constant controls.  Gradients are assembled through the discrete
adjoint of the one-step propagator (see ``_propagators``), which matches
central finite differences of the propagated cost to machine precision.
The switching function S(s) = -i Tr(lambda [Hc, rho]) is the continuous
limit of that gradient and drives the bang-bang post-processing rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._propagators import HorizonEngine
from .operators import OperatorError, check_hermitian, check_projector


@dataclass
class ControlSchedule:
    """Piecewise-constant control values with box bounds."""

    values: np.ndarray
    u_min: float
    u_max: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not self.u_min < self.u_max:
            raise OperatorError(f"need u_min < u_max, got [{self.u_min}, {self.u_max}]")
        if self.values.size and (
            self.values.min() < self.u_min - 1e-12
            or self.values.max() > self.u_max + 1e-12
        ):
            raise OperatorError("schedule values violate the control bounds")

    def __len__(self):
        return self.values.size


@dataclass
class OptimizerOptions:
    """Projected-gradient-descent settings for one horizon solve.

    ``init_policy`` selects the cold-start schedule: "zeros" starts from
    u = 0; "kick" compares u = 0 against small constant probe pulses and
    starts from the cheapest, which is what lets the descent leave the
    exactly-stationary saddle at u = 0 that diagonal states produce.  Warm
    starts (shift previous solution, pad with its last value) are used by
    the closed loop regardless and always enter the comparison.
    """

    max_iters: int = 60
    step_size: float = 0.5
    grad_tol: float = 1e-5
    init_policy: str = "kick"
    kick_fraction: float = 0.2
    backtrack_max: int = 20
    skip_converged_cost: float = 1e-4
    ftol_rel: float = 1e-4
    ftol_abs: float = 1e-9
    step_growth: float = 1.3
    rescue_cost_threshold: float = 1e-2
    coarse_factor: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise OperatorError("max_iters must be >= 1")
        if self.init_policy not in ("zeros", "kick"):
            raise OperatorError(f"unknown init_policy {self.init_policy!r}")
        if self.coarse_factor < 1:
            raise OperatorError("coarse_factor must be >= 1")


def reduced_cost(rho_pred, target):
    """Terminal cost 2(1 - Tr(rho_pred P)); accepts projectors of any rank."""
    target = check_projector(target, rank_one=False)
    if rho_pred.shape != target.shape:
        raise OperatorError(
            f"dimension mismatch: state {rho_pred.shape} vs target {target.shape}"
        )
    val = np.trace(rho_pred @ target)
    if abs(val.imag) > 1e-10:
        raise OperatorError(f"cost has imaginary residue {val.imag:.3e}")
    return 2.0 * (1.0 - float(val.real))


def switching_function(lambda_s, rho_s, Hc):
    """S = -i Tr(lambda [Hc, rho]); real for Hermitian inputs."""
    if lambda_s.shape != rho_s.shape or rho_s.shape != Hc.shape:
        raise OperatorError("switching function inputs must share one dimension")
    comm = Hc @ rho_s - rho_s @ Hc
    val = -1j * np.trace(lambda_s @ comm)
    if abs(val.imag) > 1e-10:
        raise OperatorError(f"switching function imaginary residue {val.imag:.3e}")
    return float(val.real)


def bang_bang_extract(switching, u_min, u_max, singular_tol, base=None):
    """Bang-bang schedule from the sign of the switching function.

    u = u_max where S < -tol, u = u_min where S > tol; entries with
    |S| <= tol are singular and keep the ``base`` schedule value (the
    bound midpoint when no base is given).  Returns (schedule, singular
    mask).
    """
    if singular_tol <= 0.0:
        raise OperatorError("singular_tol must be positive")
    s = np.asarray(switching, dtype=float)
    if base is None:
        fill = np.full(s.shape, 0.5 * (u_min + u_max))
    else:
        fill = np.asarray(getattr(base, "values", base), dtype=float).copy()
        if fill.shape != s.shape:
            raise OperatorError("base schedule length does not match switching vector")
    singular = np.abs(s) <= singular_tol
    values = np.where(s < -singular_tol, u_max, np.where(s > singular_tol, u_min, fill))
    return ControlSchedule(values=values, u_min=u_min, u_max=u_max), singular


def horizon_gradient(rho_t, schedule, grid, model):
    """Exact gradient of the propagated terminal cost w.r.t. each value."""
    values = np.asarray(getattr(schedule, "values", schedule), dtype=float)
    engine = HorizonEngine.for_model(model, steps=grid.steps)
    if abs(grid.dt - model.dt) > 1e-12:
        engine = HorizonEngine(
            model.H0, model.Hc, model.L, model.target, model.kappa, grid.dt, grid.steps
        )
    _, grad = engine.cost_and_grad(rho_t[None], values[None])
    return grad[0]


@dataclass
class _BatchResult:
    controls: np.ndarray
    cost: np.ndarray
    cost_history: np.ndarray
    iterations: np.ndarray
    max_trace_dev: float = 0.0


def _kick_value(model, opts):
    return opts.kick_fraction * max(abs(model.u_min), abs(model.u_max))


def optimize_horizon_batch(rho_batch, model, grid, opts, warm=None):
    """Projected gradient descent on a batch of horizon problems.

    Each path descends its own cost with backtracking (step halved on
    increase, at most ``backtrack_max`` times per iteration); accepted
    costs are therefore non-increasing.  Convergence is declared when the
    unit-step projected-gradient residual drops below ``grad_tol``.

    Initialization compares the warm start (when given) against zeros;
    paths whose chosen start is essentially zero while the cost is far
    from optimal then compare constant probe pulses of either sign and
    adopt the cheaper one.  States diagonal in the measurement basis make
    u = 0 an exactly stationary saddle, and the probe is what lets the
    descent leave it.
    """
    p = rho_batch.shape[0]
    steps = grid.steps
    engine = HorizonEngine(
        model.H0, model.Hc, model.L, model.target, model.kappa, grid.dt, steps
    )

    cands = [np.zeros((p, steps))]
    if warm is not None:
        cands.insert(0, np.array(warm, dtype=float))
    costs = np.stack([engine.cost(rho_batch, c) for c in cands])
    pick = np.argmin(costs, axis=0)
    u = np.stack([cands[pick[i]][i] for i in range(p)])
    cost = costs[pick, np.arange(p)]

    best_u = u.copy()
    best_cost = cost.copy()
    history = [best_cost.copy()]
    step = np.full(p, opts.step_size)
    active = np.ones(p, dtype=bool)
    rescued = np.zeros(p, dtype=bool)
    iterations = np.zeros(p, dtype=int)
    kick = _kick_value(model, opts)
    u_scale = max(abs(model.u_min), abs(model.u_max))

    def try_rescue(rows):
        """Restart stopping paths whose near-zero schedule sits in a flat
        trap far from the optimum (measurement-pinned wrong eigenstates
        make u = 0 a stationary or nearly-flat point there).  Returns the
        rows that were restarted from a probe pulse."""
        if opts.init_policy != "kick" or rows.size == 0:
            return np.empty(0, dtype=int)
        eligible = rows[
            (~rescued[rows])
            & (best_cost[rows] > opts.rescue_cost_threshold)
            & (np.max(np.abs(u[rows]), axis=1) < 0.05 * u_scale)
        ]
        if eligible.size == 0:
            return eligible
        probes = [
            np.clip(np.full((eligible.size, steps), val), model.u_min, model.u_max)
            for val in (kick, -kick)
        ]
        probe_costs = np.stack(
            [engine.cost(rho_batch[eligible], pr) for pr in probes]
        )
        which = np.argmin(probe_costs, axis=0)
        for i, row in enumerate(eligible):
            u[row] = probes[which[i]][i]
            cost[row] = probe_costs[which[i], i]
        rescued[eligible] = True
        step[eligible] = opts.step_size
        return eligible

    for _ in range(opts.max_iters):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        sub_rho = rho_batch[idx]
        _, grad = engine.cost_and_grad(sub_rho, u[idx])
        # descent direction in switching-function units (gradient / dt)
        g = grad / grid.dt
        residual = np.max(
            np.abs(u[idx] - np.clip(u[idx] - g, model.u_min, model.u_max)), axis=1
        )
        stopping = idx[residual < opts.grad_tol]
        if stopping.size:
            restarted = try_rescue(stopping)
            done = np.setdiff1d(stopping, restarted, assume_unique=True)
            active[done] = False
            iterations[restarted] += 1
            # drop all stopping rows from this sweep; restarted paths
            # descend from their probe pulse on the next iteration
            keep = ~np.isin(idx, stopping)
            idx = idx[keep]
            g = g[keep]
            sub_rho = rho_batch[idx]
            if idx.size == 0:
                history.append(best_cost.copy())
                continue

        trial_step = step[idx].copy()
        cur_u = u[idx]
        cur_cost = cost[idx]
        pending = np.ones(idx.size, dtype=bool)
        backtracked = np.zeros(idx.size, dtype=bool)
        new_u = cur_u.copy()
        new_cost = cur_cost.copy()
        for _bt in range(opts.backtrack_max + 1):
            if not pending.any():
                break
            cand = np.clip(
                cur_u[pending] - trial_step[pending, None] * g[pending],
                model.u_min,
                model.u_max,
            )
            cand_cost = engine.cost(sub_rho[pending], cand)
            ok = cand_cost <= new_cost[pending] + 1e-15
            sel = np.flatnonzero(pending)
            acc = sel[ok]
            new_u[acc] = cand[ok]
            new_cost[acc] = cand_cost[ok]
            pending[acc] = False
            rej = sel[~ok]
            trial_step[rej] *= 0.5
            backtracked[rej] = True
        # grow the step for paths that accepted on the first try
        grew = ~pending & ~backtracked
        trial_step[grew] = np.minimum(
            trial_step[grew] * opts.step_growth, 10.0 * opts.step_size
        )
        improvement = cur_cost - new_cost
        stalled = improvement <= np.maximum(
            opts.ftol_abs, opts.ftol_rel * np.abs(cur_cost)
        )
        u[idx] = new_u
        cost[idx] = new_cost
        step[idx] = trial_step
        improved = new_cost < best_cost[idx]
        rows = idx[improved]
        best_u[rows] = new_u[improved]
        best_cost[rows] = new_cost[improved]
        stopping = idx[pending | stalled]
        if stopping.size:
            restarted = try_rescue(stopping)
            done = np.setdiff1d(stopping, restarted, assume_unique=True)
            active[done] = False
        iterations[idx] += 1
        history.append(best_cost.copy())

    return _BatchResult(
        controls=best_u,
        cost=best_cost,
        cost_history=np.stack(history),
        iterations=iterations,
        max_trace_dev=engine.max_trace_dev,
    )


def optimize_horizon(rho_t, model, grid, opts=None, warm=None):
    """Optimize one horizon from a single state.

    Returns ``(schedule, cost_history)`` with a non-increasing history of
    accepted costs; the first entry is the cost of the chosen initial
    schedule.
    """
    opts = opts or OptimizerOptions()
    check_hermitian(rho_t, tol=1e-8, name="state")
    warm_b = None
    if warm is not None:
        warm_b = np.asarray(getattr(warm, "values", warm), dtype=float)[None]
        warm_b = np.clip(warm_b, model.u_min, model.u_max)
    res = optimize_horizon_batch(rho_t[None], model, grid, opts, warm=warm_b)
    schedule = ControlSchedule(
        values=res.controls[0], u_min=model.u_min, u_max=model.u_max
    )
    history = res.cost_history[:, 0]
    # drop trailing repeats left by paths that converged early
    return schedule, history[: res.iterations[0] + 1]
