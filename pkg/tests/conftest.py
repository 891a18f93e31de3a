import numpy as np
import pytest

from ferroneedle.model import (DimensionlessSystem, SystemState, build_system, cobalt,
                               equilibrium_chain, rng)


def random_unit(gen, n):
    v = gen.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_state(system, seed, jitter=0.05, p_scale=0.1):
    """Spins uniform on the sphere, a jittered chain and random momenta."""
    gen = rng(seed, 99)
    n = system.n_atoms
    pos = equilibrium_chain(n) + jitter * gen.normal(size=(n, 3))
    return SystemState(random_unit(gen, n), pos, p_scale * gen.normal(size=(n, 3)), 0.0)


def toy_system(n=8, b_hat=(0.3, -0.2, 0.9327379053088815), **kw):
    """Couplings of order one so that every term matters numerically."""
    b = np.asarray(b_hat, dtype=float)
    if np.linalg.norm(b) > 0:
        b = b / np.linalg.norm(b)
    args = dict(eps_j=3.0, eps_c=2.0, lambda_spin=1.5, omega_ph=5.0, b_hat=tuple(b),
                n_atoms=n)
    args.update(kw)
    return DimensionlessSystem(**args)


@pytest.fixture(scope="session")
def cobalt_1nt():
    return build_system(cobalt((0, 0, 1e-9)))


@pytest.fixture(scope="session")
def cobalt_50ut():
    return build_system(cobalt((0, 0, 50e-6)))
