"""Conditional-state simulation under continuous homodyne measurement.

The conditional state is advanced with the first-order Kraus-map
discretization of the diffusive filtering equation: the measurement
increment is sampled from the homodyne output statistics, then the state
is updated through the normalized completely positive map built from
M = I - (iH + L^dag L / 2) dt + sqrt(eta) dY L.

Trajectories are vectorized across paths; every path owns a counter-based
RNG stream keyed by ``base_seed XOR path_index`` so results do not depend
on execution order, chunking or thread count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .operators import dagger, spectral_decomposition

COLLAPSE_THRESHOLD = 0.99
PSD_CHECK_EVERY = 25
PSD_ABORT_EIGENVALUE = -1e-4
NORMALIZATION_FLOOR = 1e-14
MAX_ABORT_FRACTION = 0.01


class SimulationError(RuntimeError):
    """Raised when a trajectory or ensemble becomes numerically invalid."""


@dataclass(frozen=True)
class SdeStepConfig:
    """Step parameters for the stochastic update."""

    dt: float
    eta: float
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.dt > 0.05:
            warnings.warn(
                f"dt = {self.dt} is large for the first-order scheme",
                stacklevel=2,
            )


@dataclass
class TrajectoryRecord:
    """Single-path time series; all vectors share one length.

    ``controls[k]`` is the value applied on [t_k, t_{k+1}) with the final
    entry repeated; ``dY[k]`` is the measurement increment collected over
    [t_{k-1}, t_k) with dY[0] = 0.
    """

    times: np.ndarray
    fidelity: np.ndarray
    controls: np.ndarray
    dY: np.ndarray
    final_state: np.ndarray


@dataclass
class EnsembleStats:
    """Ensemble-averaged time series and terminal collapse statistics."""

    times: np.ndarray
    mean_fidelity: np.ndarray
    stderr_fidelity: np.ndarray
    collapse_counts: np.ndarray
    n_paths: int
    n_aborted: int = 0
    extras: dict = field(default_factory=dict)


def path_generators(base_seed, n_paths, offset=0):
    """Independent per-path RNG streams keyed by base_seed XOR path index."""
    base_seed = int(base_seed)
    return [
        np.random.Generator(np.random.Philox(key=base_seed ^ (offset + i)))
        for i in range(n_paths)
    ]


def sample_increment(rho, L, cfg, rng):
    """Draw (dY, dW) for one step: dY = sqrt(eta) Tr[(L+L^dag) rho] dt + dW."""
    dw = rng.normal(0.0, np.sqrt(cfg.dt))
    drift = np.sqrt(cfg.eta) * np.trace((L + dagger(L)) @ rho).real * cfg.dt
    return drift + dw, dw


def kraus_step(rho, H, L, cfg, dY):
    """One normalized Kraus update of the conditional state.

    ``H`` is the total Hamiltonian at this step (drift plus control part).
    Raises :class:`SimulationError` when the normalization collapses.
    """
    n = rho.shape[0]
    ldl = dagger(L) @ L
    m = np.eye(n) - (1j * H + 0.5 * ldl) * cfg.dt + np.sqrt(cfg.eta) * dY * L
    new = m @ rho @ dagger(m)
    if cfg.eta < 1.0:
        new = new + (1.0 - cfg.eta) * cfg.dt * (L @ rho @ dagger(L))
    tr = np.trace(new).real
    if tr <= NORMALIZATION_FLOOR:
        raise SimulationError(f"Kraus normalization collapsed (trace {tr:.3e})")
    new = new / tr
    return 0.5 * (new + dagger(new))


class KrausEngine:
    """Vectorized Kraus stepping for a batch of paths.

    Owns the batch of conditional states and an abort mask; paths whose
    update becomes invalid are frozen and later dropped from aggregation.
    """

    def __init__(self, model, rho_batch):
        self.model = model
        self.rho = np.array(rho_batch, dtype=complex)
        self.n_paths = self.rho.shape[0]
        self.aborted = np.zeros(self.n_paths, dtype=bool)
        self._sqrt_eta = np.sqrt(model.eta)
        n = model.dim
        ldl = dagger(model.L) @ model.L
        self._base = np.eye(n) - (1j * model.H0 + 0.5 * ldl) * model.dt
        self._hc_term = -1j * model.dt * model.Hc
        self._lsum = model.L + dagger(model.L)
        self._steps_done = 0

    def fidelity(self):
        return np.einsum("ij,pji->p", self.model.target, self.rho).real

    def observable(self, fn):
        return fn(self.rho)

    def step(self, u, dW):
        """Advance every active path one dt; returns the dY batch."""
        model = self.model
        rho = self.rho
        drift = self._sqrt_eta * np.einsum("ij,pji->p", self._lsum, rho).real
        dY = drift * model.dt + dW
        m = (
            self._base[None]
            + u[:, None, None] * self._hc_term[None]
            + (self._sqrt_eta * dY)[:, None, None] * model.L[None]
        )
        new = m @ rho @ m.conj().swapaxes(-1, -2)
        if model.eta < 1.0:
            new = new + (1.0 - model.eta) * model.dt * (
                model.L @ rho @ dagger(model.L)
            )
        tr = np.einsum("pii->p", new).real
        bad = tr <= NORMALIZATION_FLOOR
        safe_tr = np.where(bad, 1.0, tr)
        new = new / safe_tr[:, None, None]
        new = 0.5 * (new + new.conj().swapaxes(-1, -2))
        freeze = self.aborted | bad
        if freeze.any():
            new[freeze] = rho[freeze]
        self.aborted |= bad
        self.rho = new
        self._steps_done += 1
        if self._steps_done % PSD_CHECK_EVERY == 0:
            self._psd_check()
        return dY

    def apply_block(self, u_block, dw_block, observables=None):
        """Run a block of substeps; returns per-step (fidelity, dY, extras)."""
        m = u_block.shape[1]
        fid = np.empty((self.n_paths, m))
        dys = np.empty((self.n_paths, m))
        extras = {
            name: np.empty((self.n_paths, m)) for name in (observables or {})
        }
        for k in range(m):
            dys[:, k] = self.step(u_block[:, k], dw_block[:, k])
            fid[:, k] = self.fidelity()
            for name, fn in (observables or {}).items():
                extras[name][:, k] = fn(self.rho)
        return fid, dys, extras

    def _psd_check(self):
        active = ~self.aborted
        if not active.any():
            return
        lo = np.linalg.eigvalsh(self.rho[active])[:, 0]
        bad = lo < PSD_ABORT_EIGENVALUE
        if bad.any():
            idx = np.flatnonzero(active)[bad]
            self.aborted[idx] = True


def _draw_block(gens, steps, sqrt_dt):
    return np.stack([g.normal(0.0, sqrt_dt, steps) for g in gens])


def _as_control_block(result, steps):
    values = np.asarray(getattr(result, "values", result), dtype=float)
    if values.ndim == 0:
        values = np.full(steps, float(values))
    if values.shape != (steps,):
        raise ValueError(
            f"controller returned schedule of shape {values.shape}, expected ({steps},)"
        )
    return values


def simulate_trajectory(model, controller, seed):
    """Simulate one conditional trajectory under a feedback policy.

    ``controller`` is called at every decision instant as
    ``controller(t_k, rho)`` and must return the control values for the
    next ``model.substeps_per_horizon`` substeps (a ControlSchedule, a
    vector, or a scalar); ``None`` means u = 0 throughout.
    """
    m = model.substeps_per_horizon
    n_steps = model.n_steps
    gen = path_generators(seed, 1)[0]
    engine = KrausEngine(model, model.rho0[None])
    sqrt_dt = np.sqrt(model.dt)

    times = model.dt * np.arange(n_steps + 1)
    fidelity = np.empty(n_steps + 1)
    controls = np.empty(n_steps + 1)
    dys = np.empty(n_steps + 1)
    fidelity[0] = engine.fidelity()[0]
    dys[0] = 0.0

    for k in range(model.n_horizons):
        t_k = k * model.delta_t
        if controller is None:
            u_block = np.zeros((1, m))
        else:
            try:
                u_block = _as_control_block(
                    controller(t_k, engine.rho[0]), m
                )[None]
            except Exception as exc:
                raise SimulationError(
                    f"controller failed at horizon {k} (t = {t_k:g}, "
                    f"step {k * m})"
                ) from exc
        dw_block = _draw_block([gen], m, sqrt_dt)
        fid, dy, _ = engine.apply_block(u_block, dw_block)
        sl = slice(k * m + 1, (k + 1) * m + 1)
        fidelity[sl] = fid[0]
        dys[sl] = dy[0]
        controls[k * m : (k + 1) * m] = u_block[0]
        if engine.aborted[0]:
            raise SimulationError(f"trajectory aborted during horizon {k}")
    controls[-1] = controls[-2]
    return TrajectoryRecord(
        times=times,
        fidelity=fidelity,
        controls=controls,
        dY=dys,
        final_state=engine.rho[0].copy(),
    )


def _aggregate(sum_f, sum_f2, count):
    mean = sum_f / count
    var = np.maximum(sum_f2 / count - mean**2, 0.0)
    if count > 1:
        var = var * count / (count - 1)
    return mean, np.sqrt(var / count)


def monte_carlo_ensemble(
    model,
    controller,
    n_paths,
    base_seed,
    observables=None,
    chunk_size=512,
):
    """Seeded Monte Carlo ensemble of conditional trajectories.

    Per-path streams derive from ``base_seed XOR path_index``; aggregation
    is an ordered reduction over path chunks, so the output is independent
    of execution order.  Aborted paths are dropped and counted; more than
    1% aborts fails the run.  ``observables`` maps names to callables
    evaluated on the state batch each step; their ensemble mean/stderr
    series are returned in ``extras``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    m = model.substeps_per_horizon
    n_steps = model.n_steps
    times = model.dt * np.arange(n_steps + 1)
    observables = observables or {}

    sum_f = np.zeros(n_steps + 1)
    sum_f2 = np.zeros(n_steps + 1)
    obs_sums = {
        k: [np.zeros(n_steps + 1), np.zeros(n_steps + 1)] for k in observables
    }
    decomp = spectral_decomposition(model.L)
    collapse = np.zeros(decomp.n_subspaces, dtype=int)
    n_ok = 0
    n_aborted = 0
    sqrt_dt = np.sqrt(model.dt)

    for start in range(0, n_paths, chunk_size):
        stop = min(start + chunk_size, n_paths)
        gens = path_generators(base_seed, stop - start, offset=start)
        p = stop - start
        engine = KrausEngine(model, np.broadcast_to(model.rho0, (p, *model.rho0.shape)))
        fid = np.empty((p, n_steps + 1))
        obs = {k: np.empty((p, n_steps + 1)) for k in observables}
        fid[:, 0] = engine.fidelity()
        for name, fn in observables.items():
            obs[name][:, 0] = engine.observable(fn)
        for k in range(model.n_horizons):
            t_k = k * model.delta_t
            if controller is None:
                u_block = np.zeros((p, m))
            else:
                rows = []
                for i in range(p):
                    try:
                        rows.append(_as_control_block(controller(t_k, engine.rho[i]), m))
                    except Exception as exc:
                        raise SimulationError(
                            f"controller failed at horizon {k} "
                            f"(t = {t_k:g}, path {start + i})"
                        ) from exc
                u_block = np.stack(rows)
            dw_block = _draw_block(gens, m, sqrt_dt)
            block_fid, _, block_obs = engine.apply_block(
                u_block, dw_block, observables
            )
            sl = slice(k * m + 1, (k + 1) * m + 1)
            fid[:, sl] = block_fid
            for name in observables:
                obs[name][:, sl] = block_obs[name]
        ok = ~engine.aborted
        n_aborted += int(engine.aborted.sum())
        n_ok += int(ok.sum())
        sum_f += fid[ok].sum(axis=0)
        sum_f2 += (fid[ok] ** 2).sum(axis=0)
        for name in observables:
            obs_sums[name][0] += obs[name][ok].sum(axis=0)
            obs_sums[name][1] += (obs[name][ok] ** 2).sum(axis=0)
        pops = np.stack(
            [np.einsum("ij,pji->p", proj, engine.rho).real for proj in decomp.projectors]
        )
        for a in range(decomp.n_subspaces):
            collapse[a] += int(np.sum(pops[a][ok] > COLLAPSE_THRESHOLD))

    if n_aborted > MAX_ABORT_FRACTION * n_paths:
        raise SimulationError(
            f"{n_aborted}/{n_paths} trajectories aborted (> {MAX_ABORT_FRACTION:.0%})"
        )
    count = max(n_ok, 1)
    mean, stderr = _aggregate(sum_f, sum_f2, count)
    extras = {}
    for name in observables:
        extras[name] = _aggregate(obs_sums[name][0], obs_sums[name][1], count)
    return EnsembleStats(
        times=times,
        mean_fidelity=mean,
        stderr_fidelity=stderr,
        collapse_counts=collapse,
        n_paths=n_ok,
        n_aborted=n_aborted,
        extras=extras,
    )
