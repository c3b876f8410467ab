"""Batched horizon propagation with exact discrete-adjoint gradients.

One RK4 step of the (linear) averaged dynamics equals the 4th-order Taylor
polynomial of exp(dt*A(u)), A(u) = A0 + u*A1.  Exploiting that, the
one-step map, its Hilbert-Schmidt adjoint and its u-derivative are all
polynomials in applications of A0/A1, so the gradient of the terminal cost
with respect to every piecewise-constant control value can be assembled to
machine precision.  Two kernels share the algorithm: a superoperator kernel
(states as vectorized N^2 arrays, shared-matrix GEMMs; used for small N)
and a matrix kernel (states as N x N matrices; used for large N where the
N^2 x N^2 superoperator would not fit).

Everything here is internal; public contracts live in lindblad.py/pmp.py.
"""

from __future__ import annotations

import numpy as np

from .operators import dagger

SUPEROP_MAX_DIM = 32

# dt^p / p! Taylor weights are computed per engine; factorials fixed here.
_FACT = [1.0, 1.0, 2.0, 6.0, 24.0]


def _vec(rho_batch):
    p, n, _ = rho_batch.shape
    return rho_batch.reshape(p, n * n)


def _unvec(v, n):
    p = v.shape[0]
    return v.reshape(p, n, n)


class _SuperopKernel:
    """Apply A(u), A(u)^dag and dA/du through N^2 x N^2 superoperators."""

    def __init__(self, H0, Hc, L, kappa):
        n = H0.shape[0]
        eye = np.eye(n)
        ldl = dagger(L) @ L
        a0 = -1j * (np.kron(H0, eye) - np.kron(eye, H0.T))
        a0 = a0 + kappa * (
            np.kron(L, L.conj())
            - 0.5 * (np.kron(ldl, eye) + np.kron(eye, ldl.T))
        )
        a1 = -1j * (np.kron(Hc, eye) - np.kron(eye, Hc.T))
        self.a0 = a0
        self.a1 = a1
        # batched right-multiplication forms: (A v)_batch = V @ A.T
        self._a0t = np.ascontiguousarray(a0.T)
        self._a1t = np.ascontiguousarray(a1.T)
        self._a0c = np.ascontiguousarray(a0.conj())  # (A^dag).T
        self._a1c = np.ascontiguousarray(a1.conj())
        self.n = n

    def to_state(self, rho_batch):
        return _vec(np.ascontiguousarray(rho_batch, dtype=complex))

    def from_state(self, v):
        return _unvec(v, self.n)

    def apply_a(self, u, x):
        return x @ self._a0t + u[:, None] * (x @ self._a1t)

    def apply_a_dag(self, u, x):
        return x @ self._a0c + u[:, None] * (x @ self._a1c)

    def apply_b(self, x):
        return x @ self._a1t

    def trace(self, x):
        return _unvec(x, self.n).trace(axis1=-2, axis2=-1).real

    @staticmethod
    def inner(x, y):
        return np.einsum("pi,pi->p", x.conj(), y)


class _MatrixKernel:
    """Apply the generator directly on N x N matrices (large-N fallback)."""

    def __init__(self, H0, Hc, L, kappa):
        self.H0 = H0
        self.Hc = Hc
        self.L = L
        self.Ld = dagger(L)
        self.ldl = self.Ld @ L
        self.kappa = kappa
        self.n = H0.shape[0]

    def to_state(self, rho_batch):
        return np.ascontiguousarray(rho_batch, dtype=complex)

    def from_state(self, x):
        return x

    def _h_batch(self, u):
        return self.H0[None] + u[:, None, None] * self.Hc[None]

    def apply_a(self, u, x):
        h = self._h_batch(u)
        out = -1j * (h @ x - x @ h)
        if self.kappa != 0.0:
            out = out + self.kappa * (
                self.L @ x @ self.Ld - 0.5 * (self.ldl @ x + x @ self.ldl)
            )
        return out

    def apply_a_dag(self, u, x):
        h = self._h_batch(u)
        out = 1j * (h @ x - x @ h)
        if self.kappa != 0.0:
            out = out + self.kappa * (
                self.Ld @ x @ self.L - 0.5 * (self.ldl @ x + x @ self.ldl)
            )
        return out

    def apply_b(self, x):
        return -1j * (self.Hc @ x - x @ self.Hc)

    @staticmethod
    def trace(x):
        return x.trace(axis1=-2, axis2=-1).real

    @staticmethod
    def inner(x, y):
        return np.einsum("pij,pij->p", x.conj(), y)


class HorizonEngine:
    """Forward horizon propagation, terminal cost and exact control gradient.

    The one-step map is T(u) = sum_{p=0..4} (dt^p/p!) A(u)^p, identical to
    classical RK4 for this linear generator.  ``cost_and_grad`` returns the
    machine-precision gradient of J(u) = 2(1 - Tr(rho_K P)) with respect to
    each control value, via the discrete adjoint recursion
    lambda_k = T(u_k)^dag lambda_{k+1}.
    """

    def __init__(self, H0, Hc, L, target, kappa, dt, steps):
        n = H0.shape[0]
        if n <= SUPEROP_MAX_DIM:
            self.kernel = _SuperopKernel(H0, Hc, L, kappa)
        else:
            self.kernel = _MatrixKernel(H0, Hc, L, kappa)
        self.dt = float(dt)
        self.steps = int(steps)
        self.dim = n
        self._target_state = self.kernel.to_state(
            np.asarray(target, dtype=complex)[None]
        )[0]
        self._w = [self.dt**p / _FACT[p] for p in range(5)]
        self.max_trace_dev = 0.0
        self._poly = None

    def _poly_mats(self):
        """u-polynomial coefficients of the one-step map (small dims only).

        T(u) = sum_q u^q D_q and dT/du = sum_q u^q E_q; assembling the
        K one-step matrices in one shot makes single-state solves cheap.
        """
        if self._poly is None:
            a = [self.dt * self.kernel.a0, self.dt * self.kernel.a1]

            def polymul(pa, pb):
                out = [0.0] * (len(pa) + len(pb) - 1)
                for i, ma in enumerate(pa):
                    for j, mb in enumerate(pb):
                        out[i + j] = out[i + j] + ma @ mb
                return out

            powers = [a]
            for _ in range(3):
                powers.append(polymul(powers[-1], a))
            n2 = self.dim * self.dim
            d = [np.zeros((n2, n2), dtype=complex) for _ in range(5)]
            d[0] += np.eye(n2)
            for p, poly in enumerate(powers, start=1):
                for q, mat in enumerate(poly):
                    d[q] += mat / _FACT[p]
            e = [(q + 1) * d[q + 1] for q in range(4)]
            self._poly = (np.stack(d), np.stack(e))
        return self._poly

    def _can_fast_single(self, p_paths):
        return (
            p_paths == 1
            and isinstance(self.kernel, _SuperopKernel)
            and self.dim * self.dim <= 100
        )

    def _assemble_steps(self, u, mats):
        pw = u[None, :] ** np.arange(mats.shape[0])[:, None]
        return np.einsum("qk,qij->kij", pw, mats)

    def _fast_propagate(self, rho_batch, controls, keep_states=False):
        d_mats, _ = self._poly_mats()
        t_all = self._assemble_steps(controls[0], d_mats)
        x = self.kernel.to_state(rho_batch)[0]
        states = [x] if keep_states else None
        for k in range(self.steps):
            x = t_all[k] @ x
            if keep_states:
                states.append(x)
        return x, states, t_all

    def _fast_cost_and_grad(self, rho_batch, controls):
        _, e_mats = self._poly_mats()
        x_t, states, t_all = self._fast_propagate(
            rho_batch, controls, keep_states=True
        )
        cost = self._terminal_cost(x_t[None])
        dt_all = self._assemble_steps(controls[0], e_mats)
        grad = np.empty((1, self.steps))
        lam = -2.0 * self._target_state
        for k in range(self.steps - 1, -1, -1):
            grad[0, k] = np.vdot(lam, dt_all[k] @ states[k]).real
            lam = t_all[k].conj().T @ lam
        return cost, grad

    @classmethod
    def for_model(cls, model, steps=None):
        return cls(
            model.H0,
            model.Hc,
            model.L,
            model.target,
            model.kappa,
            model.dt,
            model.substeps_per_horizon if steps is None else steps,
        )

    def _step(self, u, x):
        acc = x
        v = x
        for p in range(1, 5):
            v = (self.dt / p) * self.kernel.apply_a(u, v)
            acc = acc + v
        return acc

    def _step_adjoint(self, u, lam):
        acc = lam
        w = lam
        for p in range(1, 5):
            w = (self.dt / p) * self.kernel.apply_a_dag(u, w)
            acc = acc + w
        return acc

    def propagate(self, rho_batch, controls, keep_states=False):
        """Run the horizon forward; returns (terminal states, all states?)."""
        x = self.kernel.to_state(rho_batch)
        states = [x] if keep_states else None
        for k in range(self.steps):
            x = self._step(controls[:, k], x)
            if keep_states:
                states.append(x)
        return x, states

    def cost(self, rho_batch, controls):
        if self._can_fast_single(rho_batch.shape[0]):
            x, _, _ = self._fast_propagate(rho_batch, controls)
            return self._terminal_cost(x[None])
        x, _ = self.propagate(rho_batch, controls)
        return self._terminal_cost(x)

    def terminal_state(self, rho_batch, controls):
        x, _ = self.propagate(rho_batch, controls)
        return self.kernel.from_state(x)

    def _terminal_cost(self, x):
        dev = np.max(np.abs(self.kernel.trace(x) - 1.0))
        if dev > self.max_trace_dev:
            self.max_trace_dev = float(dev)
        fid = self.kernel.inner(
            np.broadcast_to(self._target_state, x.shape), x
        ).real
        return 2.0 * (1.0 - fid)

    def cost_and_grad(self, rho_batch, controls):
        """Terminal cost and exact gradient dJ/du_k, shapes (P,), (P, K)."""
        if self._can_fast_single(rho_batch.shape[0]):
            return self._fast_cost_and_grad(rho_batch, controls)
        xT, states = self.propagate(rho_batch, controls, keep_states=True)
        cost = self._terminal_cost(xT)
        p_paths = xT.shape[0]
        grad = np.empty((p_paths, self.steps))
        lam = np.broadcast_to(
            -2.0 * self._target_state, xT.shape
        ).astype(complex)
        for k in range(self.steps - 1, -1, -1):
            u = controls[:, k]
            # raw powers v_i = A^i rho_k and w_j = (A^dag)^j lambda_{k+1}
            v = [states[k]]
            for _ in range(3):
                v.append(self.kernel.apply_a(u, v[-1]))
            w = [lam]
            for _ in range(3):
                w.append(self.kernel.apply_a_dag(u, w[-1]))
            bv = [self.kernel.apply_b(vi) for vi in v]
            g = np.zeros(p_paths)
            for s in range(4):
                acc = np.zeros(p_paths, dtype=complex)
                for i in range(s + 1):
                    acc += self.kernel.inner(w[s - i], bv[i])
                g += self._w[s + 1] * acc.real
            grad[:, k] = g
            # lambda_k = T^dag lambda_{k+1} reuses the computed powers
            lam = w[0] + self._w[1] * w[1] + self._w[2] * w[2] + self._w[3] * w[3]
            lam = lam + self._w[4] * self.kernel.apply_a_dag(u, w[3])
        return cost, grad
