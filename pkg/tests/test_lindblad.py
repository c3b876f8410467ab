import numpy as np
import pytest

import qsmpc as q
from qsmpc.lindblad import HorizonGrid, lindblad_rhs, propagate_costate, propagate_state
from qsmpc.operators import OperatorError

from conftest import random_density, three_level_model


class TestLindbladRhs:
    def test_dark_state(self):
        _, _, jz = q.angular_momentum_ops(1)
        rhs = lindblad_rhs(q.pure_state(3, 0), np.zeros((3, 3)), 0.0, np.zeros((3, 3)), jz)
        assert np.max(np.abs(rhs)) < 1e-12

    def test_traceless_and_hermitian(self, rng):
        _, jy, jz = q.angular_momentum_ops(1)
        rho = random_density(rng, 3)
        rhs = lindblad_rhs(rho, jz, 1.3, jy, jz, kappa=0.8)
        assert abs(np.trace(rhs)) < 1e-12
        assert np.max(np.abs(rhs - rhs.conj().T)) < 1e-12

    def test_maximally_mixed_fixed_point(self):
        _, _, jz = q.angular_momentum_ops(1)
        rhs = lindblad_rhs(np.eye(3) / 3, jz, 0.0, np.zeros((3, 3)), jz)
        assert np.max(np.abs(rhs)) < 1e-12

    def test_dimension_mismatch(self, rng):
        _, jy, jz = q.angular_momentum_ops(1)
        with pytest.raises(OperatorError):
            lindblad_rhs(random_density(rng, 2), jz, 0.0, jy, jz)


class TestPropagateState:
    def test_invariant_target(self):
        model = three_level_model()
        grid = HorizonGrid(0.0, 0.01, 50)
        out = propagate_state(q.pure_state(3, 2), np.zeros(50), grid, model)
        assert np.max(np.abs(out[-1] - q.pure_state(3, 2))) < 1e-10

    def test_fourth_order_self_convergence(self, rng):
        model = three_level_model()
        u = 2.0
        horizon = 0.4
        ref_grid = HorizonGrid(0.0, 1e-4, int(horizon / 1e-4))
        ref = propagate_state(
            model.rho0, np.full(ref_grid.steps, u), ref_grid, model
        )[-1]
        errs = []
        for dt in (0.02, 0.01, 0.005):
            grid = HorizonGrid(0.0, dt, int(round(horizon / dt)))
            out = propagate_state(model.rho0, np.full(grid.steps, u), grid, model)[-1]
            errs.append(np.max(np.abs(out - ref)))
        ratios = [errs[i] / errs[i + 1] for i in range(2)]
        for r in ratios:
            assert 8 < r < 40  # nominal 16x per halving

    def test_matches_ensemble_mean(self):
        """Averaged propagation equals the trajectory-ensemble mean."""
        model = three_level_model(T=2.0)
        pulse = 1.5
        stats = q.monte_carlo_ensemble(model, lambda t, rho: pulse, 400, base_seed=21)
        grid = HorizonGrid(0.0, model.dt, model.n_steps)
        states = propagate_state(model.rho0, np.full(grid.steps, pulse), grid, model)
        det_fid = np.array([q.fidelity(s, model.target) for s in states])
        dev = np.abs(stats.mean_fidelity - det_fid)
        assert np.all(dev <= 3 * stats.stderr_fidelity + 5e-3)

    def test_preserves_density_invariants(self, rng):
        model = three_level_model()
        grid = HorizonGrid(0.0, 0.01, 50)
        sched = rng.uniform(-5, 5, 50)
        for s in propagate_state(model.rho0, sched, grid, model):
            q.check_density_matrix(s)

    def test_schedule_length_mismatch(self):
        model = three_level_model()
        grid = HorizonGrid(0.0, 0.01, 50)
        with pytest.raises(OperatorError):
            propagate_state(model.rho0, np.zeros(10), grid, model)


class TestPropagateCostate:
    def test_hamiltonian_pairing_conserved(self, rng):
        """With L = 0 the pairing Tr(lambda rho) is constant in s."""
        _, jy, jz = q.angular_momentum_ops(1)
        model = three_level_model(L=np.zeros((3, 3)), validate=False)
        grid = HorizonGrid(0.0, 0.01, 40)
        sched = rng.uniform(-3, 3, 40)
        states = propagate_state(random_density(rng, 3), sched, grid, model)
        lams = propagate_costate(-2 * model.target, sched, grid, model)
        pair = [np.trace(l @ s).real for l, s in zip(lams, states)]
        assert np.max(np.abs(np.array(pair) - pair[0])) < 1e-8

    def test_diagonal_invariance(self):
        model = three_level_model()
        grid = HorizonGrid(0.0, 0.01, 30)
        lams = propagate_costate(-2 * model.target, np.zeros(30), grid, model)
        for lam in lams:
            off = lam - np.diag(np.diag(lam))
            assert np.max(np.abs(off)) < 1e-12

    def test_pairing_with_dissipator_sign(self, rng):
        """The default sign conserves the adjoint pairing; +1 does not."""
        model = three_level_model()
        grid = HorizonGrid(0.0, 0.01, 50)
        sched = rng.uniform(-2, 2, 50)
        states = propagate_state(model.rho0, sched, grid, model)

        def drift(sign):
            lams = propagate_costate(-2 * model.target, sched, grid, model, sign)
            pair = [np.trace(l @ s).real for l, s in zip(lams, states)]
            return np.max(np.abs(np.array(pair) - pair[-1]))

        assert drift(-1) < 1e-8
        assert drift(+1) > 1e-6

    def test_gradient_sign_arbiter(self, rng):
        """Finite differences single out dissipator_sign = -1."""
        model = three_level_model()
        grid = HorizonGrid(0.0, 0.01, 20)
        sched = rng.uniform(-2, 2, 20)
        states = propagate_state(model.rho0, sched, grid, model)

        def assembled_gradient(sign):
            lams = propagate_costate(-2 * model.target, sched, grid, model, sign)
            return np.array(
                [
                    grid.dt * q.switching_function(lams[k], states[k], model.Hc)
                    for k in range(grid.steps)
                ]
            )

        du = 1e-5
        fd = np.zeros(grid.steps)
        for k in range(grid.steps):
            up, um = sched.copy(), sched.copy()
            up[k] += du
            um[k] -= du
            fp = q.reduced_cost(propagate_state(model.rho0, up, grid, model)[-1], model.target)
            fm = q.reduced_cost(propagate_state(model.rho0, um, grid, model)[-1], model.target)
            fd[k] = (fp - fm) / (2 * du)
        err_minus = np.linalg.norm(assembled_gradient(-1) - fd) / np.linalg.norm(fd)
        err_plus = np.linalg.norm(assembled_gradient(+1) - fd) / np.linalg.norm(fd)
        assert err_minus < 5e-3  # first-order quadrature of the exact adjoint
        assert err_plus > 10 * err_minus
