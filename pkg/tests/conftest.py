import numpy as np
import pytest

from lqrsynth import CostSpec, SystemModel, spectral_radius

DOUBLE_INTEGRATOR = dict(A=[[1.0, 1.0], [0.0, 1.0]], B=[[0.0], [1.0]])


def example_model(alpha=1.0):
    return SystemModel(DOUBLE_INTEGRATOR["A"], DOUBLE_INTEGRATOR["B"], alpha)


def example_cost():
    return CostSpec(np.eye(2), [[0.1]])


def random_psd(rng, k, rank=None, shift=0.0):
    X = rng.normal(size=(k, rank or k))
    return X @ X.T + shift * np.eye(k)


def random_stable_instance(rng, n_max=4, m_max=2, alpha=None, target=None):
    """Model plus a gain F with sqrt(alpha) * rho(A+BF) equal to ``target``.

    A and B are scaled together, which scales A+BF by the same factor.
    """
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    alpha = float(rng.choice([0.9, 1.0])) if alpha is None else alpha
    A, B = rng.normal(size=(n, n)), rng.normal(size=(n, m))
    F = rng.normal(size=(m, n))
    r = spectral_radius(A + B @ F)
    target = rng.uniform(0.3, 0.9) if target is None else target
    c = target / (np.sqrt(alpha) * max(r, 1e-9))
    model = SystemModel(c * A, c * B, alpha)
    cost = CostSpec(random_psd(rng, n, shift=0.1), random_psd(rng, m, shift=0.5))
    return model, cost, F


def random_stabilizable(rng, n_max=4, m_max=2):
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    A = rng.normal(size=(n, n))
    A *= rng.uniform(0.5, 1.3) / max(spectral_radius(A), 1e-9)
    model = SystemModel(A, rng.normal(size=(n, m)))
    cost = CostSpec(random_psd(rng, n, shift=0.2), random_psd(rng, m, shift=0.2))
    return model, cost


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# --- acceptance summary ----------------------------------------------------

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])


def central_difference(f, F, h=1e-6):
    G = np.zeros_like(F)
    for idx in np.ndindex(*F.shape):
        E = np.zeros_like(F)
        E[idx] = h
        G[idx] = (f(F + E) - f(F - E)) / (2 * h)
    return G


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)
