import itertools

import numpy as np
import pytest

from penscale import OrdinalDataMatrix, QpProblem


def make_ordinal(seed, n=200, p=10, k=5, rank=2):
    """Ordinal data from a low-rank Gaussian with random power relabelings; all levels observed."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, rank)) @ rng.normal(size=(rank, p)) + rng.normal(size=(n, p))
    X = np.sign(X) * np.abs(X) ** rng.uniform(0.5, 2.0, size=p)
    probs = np.cumsum(np.full(k, 1.0 / k))[:-1]
    cuts = np.quantile(X, probs, axis=0)
    L = np.column_stack([1 + np.searchsorted(cuts[:, j], X[:, j]) for j in range(p)])
    return OrdinalDataMatrix(L, level_counts=[k] * p)


def random_qp(rng, d_max=8, q_max=4, e_max=1):
    d = int(rng.integers(1, d_max + 1))
    M = rng.normal(size=(d, d))
    G = M @ M.T + 0.1 * np.eye(d)
    e = int(rng.integers(0, e_max + 1)) if d > 1 else 0
    q = int(rng.integers(0, q_max + 1))
    return QpProblem(G, rng.normal(size=d), rng.normal(size=(e, d)), rng.normal(size=e),
                     rng.normal(size=(q, d)), rng.normal(size=q))


def brute_force_qp(P, tol=1e-9):
    """Enumerate active sets; return the KKT point (x, objective) or None if infeasible."""
    d, q, e = P.dim, P.Cineq.shape[0], P.Ceq.shape[0]
    best = None
    for size in range(q + 1):
        for S in itertools.combinations(range(q), size):
            C = np.vstack([P.Ceq, P.Cineq[list(S)]])
            b = np.concatenate([P.beq, P.bineq[list(S)]])
            K = np.block([[P.G, -C.T], [C, np.zeros((C.shape[0], C.shape[0]))]])
            try:
                sol = np.linalg.solve(K, np.concatenate([P.a, b]))
            except np.linalg.LinAlgError:
                continue
            x, mult = sol[:d], sol[d:]
            if np.all(P.Cineq @ x >= P.bineq - tol) and np.all(mult[e:] >= -tol):
                obj = P.objective(x)
                if best is None or obj < best[1]:
                    best = (x, obj)
    return best


def pava(y, w):
    """Weighted isotonic (non-decreasing) regression by pooling adjacent violators."""
    blocks = [[float(v), float(wt), 1] for v, wt in zip(y, w)]
    i = 0
    while i < len(blocks) - 1:
        if blocks[i][0] > blocks[i + 1][0]:
            v1, w1, c1 = blocks[i]
            v2, w2, c2 = blocks.pop(i + 1)
            blocks[i] = [(v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2, c1 + c2]
            i = max(i - 1, 0)
        else:
            i += 1
    return np.concatenate([[v] * c for v, _, c in blocks])


@pytest.fixture
def small_data():
    return make_ordinal(0, n=120, p=6, k=4)
