import numpy as np
import pytest

import qsmpc as q


def random_density(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (a + a.conj().T)


def three_level_model(**overrides):
    """The reference three-level setup: H0 = L = Jz, Hc = Jy."""
    _, jy, jz = q.angular_momentum_ops(1)
    defaults = dict(
        H0=jz,
        Hc=jy,
        L=jz,
        target=q.pure_state(3, 2),
        rho0=np.diag([0.3, 0.4, 0.3]).astype(complex),
        eta=1.0,
        dt=0.01,
        delta_t=0.5,
        T=20.0,
        u_min=-5.0,
        u_max=5.0,
        seed=0,
    )
    defaults.update(overrides)
    return q.ModelConfig(**defaults)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
