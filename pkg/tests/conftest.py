import numpy as np
import pytest

from locsysid import netsim


@pytest.fixture(scope="session")
def chain_full():
    return netsim.paper_chain("full")


@pytest.fixture(scope="session")
def chain_hidden():
    return netsim.paper_chain("hidden")


@pytest.fixture(scope="session")
def chain_noiseless():
    return netsim.paper_chain("full", sigma_w=0.0, sigma_nu=0.0, sigma_nubar=0.0)


def random_stable_system(n, p, q, seed, radius=0.6):
    """Random minimal (A, B, C, D) with spectral radius ``radius``."""
    rng = np.random.default_rng(seed)
    while True:
        A = rng.standard_normal((n, n))
        A *= radius / max(abs(np.linalg.eigvals(A)))
        B = rng.standard_normal((n, p))
        C = rng.standard_normal((q, n))
        D = rng.standard_normal((q, p))
        ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        obsv = np.vstack([C @ np.linalg.matrix_power(A, k) for k in range(n)])
        if np.linalg.matrix_rank(ctrb) == n and np.linalg.matrix_rank(obsv) == n:
            return A, B, C, D


def markov_blocks(A, B, C, D, count):
    """[D, CB, CAB, ...] as an (count+1, q, p) array."""
    blocks = [D]
    acc = B
    for _ in range(count):
        blocks.append(C @ acc)
        acc = A @ acc
    return np.array(blocks)
