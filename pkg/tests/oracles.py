"""Brute-force reference solvers used only by the tests.

Nothing here shares code with the package's solvers.
"""

import itertools

import numpy as np


def active_set_qp(Q, c, A, lower, upper, tol=1e-9):
    """Exact minimiser of a strictly convex QP by enumerating active sets.

    Every row is either inactive, pinned at its lower bound or pinned at its
    upper bound (3^m cases). Each case is an equality-constrained QP solved
    through its KKT system; the feasible candidate with the least objective
    is the optimum. Returns ``None`` when no candidate is feasible.
    """
    Q = np.asarray(Q, float)
    c = np.asarray(c, float)
    A = np.asarray(A, float).reshape(-1, Q.shape[0])
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    n, m = Q.shape[0], A.shape[0]
    best_x, best_f = None, np.inf
    for pattern in itertools.product((0, 1, 2), repeat=m):
        act = [i for i in range(m) if pattern[i]]
        if any(pattern[i] == 1 and not np.isfinite(lower[i]) for i in act):
            continue
        if any(pattern[i] == 2 and not np.isfinite(upper[i]) for i in act):
            continue
        b = np.array([lower[i] if pattern[i] == 1 else upper[i] for i in act])
        Aa = A[act]
        k = len(act)
        K = np.block([[Q, Aa.T], [Aa, np.zeros((k, k))]]) if k else Q
        rhs = np.concatenate([-c, b]) if k else -c
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            if np.linalg.norm(K @ sol - rhs) > 1e-8:
                continue
        x = sol[:n]
        Ax = A @ x
        if np.any(Ax < lower - tol) or np.any(Ax > upper + tol):
            continue
        f = 0.5 * x @ Q @ x + c @ x
        if f < best_f:
            best_x, best_f = x, f
    return best_x, best_f


def random_strictly_convex_qp(rng, n_max=6, m_max=4):
    """Random QP that is feasible by construction (a known interior-ish point)."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    B = rng.normal(size=(n, n))
    Q = B @ B.T + 0.1 * np.eye(n)
    c = rng.normal(size=n) * 3
    A = rng.normal(size=(m, n))
    x0 = rng.normal(size=n)
    Ax0 = A @ x0
    lower = Ax0 - rng.uniform(0.0, 1.0, size=m)
    upper = Ax0 + rng.uniform(0.0, 1.0, size=m)
    kind = rng.integers(0, 4, size=m)
    lower[kind == 1] = -np.inf
    upper[kind == 2] = np.inf
    eq = kind == 3
    lower[eq] = upper[eq] = Ax0[eq]
    return Q, c, A, lower, upper


def project_onto_halfspaces(y, A, lower, upper, sweeps=2000):
    """Feasible point near ``y`` by cyclic projections onto single rows (Kaczmarz)."""
    y = np.array(y, float)
    for _ in range(sweeps):
        worst = 0.0
        for a, lo, hi in zip(A, lower, upper):
            v = a @ y
            nrm = a @ a
            if v < lo:
                y += (lo - v) / nrm * a
                worst = max(worst, lo - v)
            elif v > hi:
                y -= (v - hi) / nrm * a
                worst = max(worst, v - hi)
        if worst < 1e-12:
            break
    return y
