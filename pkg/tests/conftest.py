"""Shared oracles and builders for the test suite.

Oracles here are deliberately independent of the library code paths they
check: vertex enumeration for LPs, dense 0/1 enumeration for binary MILPs,
counting-based top-k ranks, and Riemann sums for integrals.
"""

import itertools

import numpy as np
import pytest

from branchlab.features import BipartiteState
from branchlab.milp import MilpInstance


def enumerate_lp(c, A, b, lo, hi, tol=1e-9):
    """Min of c.x over {Ax<=b, lo<=x<=hi} by enumerating active-set vertices.

    Returns None when no feasible vertex exists (the box is finite, so a
    feasible LP always has one).
    """
    m, n = A.shape
    best = None
    for k in range(0, min(m, n) + 1):
        for rows in itertools.combinations(range(m), k):
            for free in itertools.combinations(range(n), k):
                fixed = [j for j in range(n) if j not in free]
                for sides in itertools.product((0, 1), repeat=len(fixed)):
                    x = np.zeros(n)
                    for j, s in zip(fixed, sides):
                        x[j] = lo[j] if s == 0 else hi[j]
                    if k:
                        M = A[np.ix_(rows, free)]
                        rhs = b[list(rows)] - A[np.ix_(rows, fixed)] @ x[fixed]
                        try:
                            sol = np.linalg.solve(M, rhs)
                        except np.linalg.LinAlgError:
                            continue
                        x[list(free)] = sol
                    if np.any(x < lo - tol) or np.any(x > hi + tol):
                        continue
                    if m and np.any(A @ x > b + tol):
                        continue
                    z = float(c @ x)
                    if best is None or z < best:
                        best = z
    return best


def brute_force_binary_optimum(instance: MilpInstance) -> float:
    """Exhaustive 0/1 enumeration; +inf when nothing is feasible."""
    assert instance.integrality.all() and instance.n <= 16
    A = instance.dense_matrix()
    n = instance.n
    bits = ((np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
    feas = np.all(bits @ A.T <= instance.b + 1e-9, axis=1)
    feas &= np.all(bits >= instance.lower - 1e-9, axis=1)
    feas &= np.all(bits <= instance.upper + 1e-9, axis=1)
    if not feas.any():
        return float("inf")
    return float((bits[feas] @ instance.c).min())


def random_box_lp(rng, n=None, m=None, feasible_margin=None):
    """A small dense LP instance with finite bounds."""
    n = n if n is not None else int(rng.integers(1, 7))
    m = m if m is not None else int(rng.integers(0, 5))
    c = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    lo = rng.uniform(-2.0, 0.0, n)
    hi = lo + rng.uniform(0.5, 3.0, n)
    x0 = rng.uniform(lo, hi)
    margin = feasible_margin if feasible_margin is not None \
        else rng.uniform(-0.5, 1.5, m)
    b = A @ x0 + margin
    rows, cols = np.nonzero(np.ones((m, n)))
    return MilpInstance(
        name=f"box{n}x{m}",
        c=c,
        a_rows=rows,
        a_cols=cols,
        a_vals=A.flatten() if m else [],
        b=b,
        lower=lo,
        upper=hi,
        integrality=np.zeros(n, dtype=bool),
    )


def random_bipartite_state(rng, m, n, nnz):
    er = rng.integers(0, m, nnz)
    ec = rng.integers(0, n, nnz)
    pairs = sorted(set(zip(er.tolist(), ec.tolist())))
    er = np.array([p[0] for p in pairs], dtype=np.int64)
    ec = np.array([p[1] for p in pairs], dtype=np.int64)
    return BipartiteState(
        C=rng.normal(size=(m, 5)),
        edge_row=er,
        edge_col=ec,
        edge_val=rng.normal(size=len(er)),
        V=rng.normal(size=(n, 19)),
    )


def top_k_rank_oracle(scores, pos) -> int:
    """Rank of candidate ``pos`` by sorting, ties by candidate order."""
    order = sorted(range(len(scores)), key=lambda q: (-scores[q], q))
    return order.index(pos)


def gradcheck(params, grads, loss_fn, step=1e-5, rel_tol=1e-4, abs_tol=1e-7):
    """Central finite differences over every tensor coordinate.

    A coordinate passes on relative error <= rel_tol or absolute difference
    <= abs_tol (the gradient can be exactly zero while finite differences
    pick up roundoff noise of order 1e-11).
    """
    worst = 0.0
    for key, g in grads.items():
        t = params.tensors[key]
        it = np.nditer(t, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = t[idx]
            t[idx] = orig + step
            lp = loss_fn()
            t[idx] = orig - step
            lm = loss_fn()
            t[idx] = orig
            fd = (lp - lm) / (2 * step)
            diff = abs(fd - g[idx])
            if diff <= abs_tol:
                continue
            rel = diff / max(abs(fd), abs(g[idx]), 1e-8)
            worst = max(worst, rel)
            if rel > rel_tol:
                return worst, f"{key}{idx}: analytic {g[idx]:.3e} vs fd {fd:.3e}"
    return worst, None


@pytest.fixture
def tiny_knapsack():
    """min -3a - 2b subject to 2a + 2b <= 3, both binary; LP root x=(1, 0.5)."""
    return MilpInstance(
        name="kp",
        c=[-3.0, -2.0],
        a_rows=[0, 0],
        a_cols=[0, 1],
        a_vals=[2.0, 2.0],
        b=[3.0],
        lower=[0.0, 0.0],
        upper=[1.0, 1.0],
        integrality=[True, True],
    )
