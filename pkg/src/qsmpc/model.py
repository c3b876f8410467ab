"""Problem definition shared by the simulator, optimizer and closed loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import (
    OperatorError,
    check_density_matrix,
    check_hermitian,
    check_projector,
)


@dataclass
class ModelConfig:
    """Full control-problem definition.

    ``H0`` is the drift Hamiltonian, ``Hc`` the control Hamiltonian coupled
    through a scalar input, ``L`` the (Hermitian) measurement operator and
    ``target`` the projector to stabilize.  ``dt`` is the integration step,
    ``delta_t`` the receding-horizon length and ``T`` the total run time.
    ``rho0`` is the initial conditional state.
    """

    H0: np.ndarray
    Hc: np.ndarray
    L: np.ndarray
    target: np.ndarray
    rho0: np.ndarray
    eta: float = 1.0
    kappa: float = 1.0
    dt: float = 0.01
    delta_t: float = 0.5
    T: float = 20.0
    u_min: float = -5.0
    u_max: float = 5.0
    seed: int = 0
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.H0 = check_hermitian(self.H0, name="H0")
        self.Hc = check_hermitian(self.Hc, name="Hc")
        self.L = check_hermitian(self.L, tol=1e-10, name="L")
        self.target = check_projector(self.target, rank_one=False, name="target")
        self.rho0 = check_density_matrix(self.rho0)
        dims = {a.shape[0] for a in (self.H0, self.Hc, self.L, self.target, self.rho0)}
        if len(dims) != 1:
            raise OperatorError(f"operator dimensions disagree: {sorted(dims)}")
        if not self.validate:
            return
        if not 0.0 <= self.eta <= 1.0:
            raise OperatorError(f"eta must lie in [0, 1], got {self.eta}")
        if self.kappa < 0.0:
            raise OperatorError(f"kappa must be >= 0, got {self.kappa}")
        if self.dt <= 0.0 or self.delta_t <= 0.0 or self.T <= 0.0:
            raise OperatorError("dt, delta_t and T must be positive")
        ratio = self.delta_t / self.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise OperatorError(f"delta_t/dt = {ratio} is not an integer")
        if self.T / self.delta_t < 1.0 - 1e-9:
            raise OperatorError("T must cover at least one horizon delta_t")
        if not self.u_min < self.u_max:
            raise OperatorError(f"need u_min < u_max, got [{self.u_min}, {self.u_max}]")
        for name, op in (("L", self.L), ("H0", self.H0)):
            dev = np.max(np.abs(op @ self.target - self.target @ op))
            if dev > 1e-10:
                raise OperatorError(
                    f"target must commute with {name}: max|[{name}, P]| = {dev:.3e}"
                )

    @property
    def dim(self):
        return self.H0.shape[0]

    @property
    def substeps_per_horizon(self):
        return int(round(self.delta_t / self.dt))

    @property
    def n_horizons(self):
        return int(np.ceil(self.T / self.delta_t - 1e-9))

    @property
    def n_steps(self):
        return self.n_horizons * self.substeps_per_horizon
