"""Averaged (unconditional) state propagation and backward costate propagation.

The averaged dynamics are the Lindblad equation obtained by taking the
noise expectation of the conditional evolution; the costate is the adjoint
variable used to assemble horizon gradients.  Both are integrated with
fixed-step classical RK4 so forward and backward grids align exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import OperatorError, check_hermitian, dagger


@dataclass(frozen=True)
class HorizonGrid:
    """Uniform time grid for one prediction horizon."""

    t0: float
    dt: float
    steps: int

    def __post_init__(self):
        if self.dt <= 0.0 or self.steps < 1:
            raise OperatorError("grid requires dt > 0 and steps >= 1")

    @property
    def horizon(self):
        return self.steps * self.dt

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.steps + 1)


def lindblad_rhs(rho, H0, u, Hc, L, kappa=1.0):
    """Right-hand side -i[H0 + u Hc, rho] + kappa D[L] rho.

    Traceless and Hermitian by construction for Hermitian inputs.
    """
    if rho.shape != H0.shape:
        raise OperatorError(f"dimension mismatch: state {rho.shape}, H0 {H0.shape}")
    h = H0 + u * Hc
    ld = dagger(L)
    ldl = ld @ L
    out = -1j * (h @ rho - rho @ h)
    out = out + kappa * (L @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl))
    return out


def _rk4_step(rho, h, L, ldl, kappa, dt):
    def rhs(x):
        out = -1j * (h @ x - x @ h)
        return out + kappa * (L @ x @ dagger(L) - 0.5 * (ldl @ x + x @ ldl))

    k1 = rhs(rho)
    k2 = rhs(rho + 0.5 * dt * k1)
    k3 = rhs(rho + 0.5 * dt * k2)
    k4 = rhs(rho + dt * k3)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate_state(rho0, schedule, grid, model):
    """Propagate the averaged state over one horizon under a control schedule.

    ``schedule`` supplies one control value per grid step (a
    :class:`~qsmpc.pmp.ControlSchedule` or a plain vector).  Returns the
    list of states on the grid (length ``steps + 1``); each state is
    re-Hermitized and trace-renormalized.  Raises on trace drift beyond
    1e-4 over the horizon, which indicates the step size is too large.
    """
    values = np.asarray(getattr(schedule, "values", schedule), dtype=float)
    if values.shape != (grid.steps,):
        raise OperatorError(
            f"schedule length {values.shape} does not match grid steps {grid.steps}"
        )
    L = model.L
    ldl = dagger(L) @ L
    rho = np.array(rho0, dtype=complex)
    out = [rho.copy()]
    for k in range(grid.steps):
        h = model.H0 + values[k] * model.Hc
        rho = _rk4_step(rho, h, L, ldl, model.kappa, grid.dt)
        rho = 0.5 * (rho + dagger(rho))
        tr = np.trace(rho).real
        if abs(tr - 1.0) > 1e-4:
            raise OperatorError(
                f"trace drift {abs(tr - 1.0):.3e} at step {k}; reduce dt"
            )
        rho = rho / tr
        out.append(rho.copy())
    return out


def propagate_costate(lambdaT, schedule, grid, model, dissipator_sign=-1):
    """Propagate the costate backward from its terminal condition.

    Integrates d(lambda)/ds = -i[H0 + u Hc, lambda] + sign * Dadj[L] lambda
    backward over the horizon, where Dadj[L] x = L^dag x L - {L^dag L, x}/2.
    With ``dissipator_sign=-1`` the pairing Tr(lambda(s) rho(s)) is conserved
    along coupled forward/backward solutions, which is the convention under
    which the assembled gradient matches finite differences.  The returned
    list is indexed like :func:`propagate_state` (entry k corresponds to
    grid time t_k; entry ``steps`` is the terminal condition).
    """
    if dissipator_sign not in (-1, 1):
        raise OperatorError("dissipator_sign must be +1 or -1")
    values = np.asarray(getattr(schedule, "values", schedule), dtype=float)
    if values.shape != (grid.steps,):
        raise OperatorError(
            f"schedule length {values.shape} does not match grid steps {grid.steps}"
        )
    L = model.L
    ld = dagger(L)
    ldl = ld @ L
    sign = float(dissipator_sign)
    kappa = model.kappa

    lam = check_hermitian(lambdaT, tol=1e-10, name="terminal costate").copy()
    out = [lam.copy()]

    # backward integration: with s -> -s the generator becomes
    # +i[H, lam] - sign * kappa * Dadj[L] lam
    def rhs(x, h):
        out_ = 1j * (h @ x - x @ h)
        return out_ - sign * kappa * (ld @ x @ L - 0.5 * (ldl @ x + x @ ldl))

    for k in range(grid.steps - 1, -1, -1):
        h = model.H0 + values[k] * model.Hc
        k1 = rhs(lam, h)
        k2 = rhs(lam + 0.5 * grid.dt * k1, h)
        k3 = rhs(lam + 0.5 * grid.dt * k2, h)
        k4 = rhs(lam + grid.dt * k3, h)
        lam = lam + (grid.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        lam = 0.5 * (lam + dagger(lam))
        out.append(lam.copy())
    out.reverse()
    return out
