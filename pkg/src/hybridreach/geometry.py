"""Small exact geometry kernels: nearest points of polytopes and polyhedra."""
from __future__ import annotations

import itertools

import numpy as np


class EmptySetError(Exception):
    pass


def min_norm_point(P, eps=1e-12, max_iter=500):
    """Wolfe's algorithm: the point of least norm in conv(rows of P).

    Returns (point, weights) where weights are barycentric over the rows.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    k = P.shape[0]
    if k == 1:
        return P[0].copy(), np.ones(1)
    scale = max(1.0, float(np.max(np.sum(P * P, axis=1))))
    S = [int(np.argmin(np.sum(P * P, axis=1)))]
    w = np.array([1.0])
    x = P[S[0]].copy()
    for _ in range(max_iter):
        j = int(np.argmin(P @ x))
        if x @ x - P[j] @ x <= eps * scale or j in S:
            break
        S.append(j)
        w = np.append(w, 0.0)
        while True:
            Q = P[S]
            m = len(S)
            M = np.zeros((m + 1, m + 1))
            M[:m, :m] = Q @ Q.T
            M[:m, m] = 1.0
            M[m, :m] = 1.0
            rhs = np.zeros(m + 1)
            rhs[m] = 1.0
            alpha = np.linalg.lstsq(M, rhs, rcond=None)[0][:m]
            if np.all(alpha > eps):
                w = alpha
                break
            mask = alpha <= eps
            denom = w[mask] - alpha[mask]
            ok = denom > 0
            theta = float(np.min(w[mask][ok] / denom[ok])) if np.any(ok) else 0.0
            theta = min(max(theta, 0.0), 1.0)
            w = theta * alpha + (1 - theta) * w
            keep = w > eps
            if not np.any(keep):
                keep[int(np.argmax(w))] = True
            S = [s for s, kp in zip(S, keep) if kp]
            w = w[keep]
            w = w / w.sum()
        x = P[S].T @ w
    full = np.zeros(k)
    full[S] = w
    return x, full


def hull_distance(V, y):
    """Distance from y to the convex hull of the rows of V, with the nearest point."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    y = np.asarray(y, dtype=float)
    p, w = min_norm_point(V - y)
    return float(np.linalg.norm(p)), p + y, w


def _affine_project(y, M, c):
    # nearest point to y on {z : M z = c}
    if M.shape[0] == 0:
        return y.copy()
    r = M @ y - c
    sol = np.linalg.lstsq(M @ M.T, r, rcond=None)[0]
    return y - M.T @ sol


def project_polyhedron(y, A, b, E=None, f=None, tol=1e-13):
    """Exact Euclidean projection onto {A z <= b, E z = f} by active-set enumeration.

    Intended for the handful of constraints that appear in practice; the
    candidate count grows combinatorially with the number of rows.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    A = np.zeros((0, n)) if A is None else np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, n)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).reshape(-1)
    E = np.zeros((0, n)) if E is None else np.atleast_2d(np.asarray(E, dtype=float)).reshape(-1, n)
    f = np.zeros(0) if f is None else np.asarray(f, dtype=float).reshape(-1)
    scale = 1.0 + float(np.max(np.abs(y))) if n else 1.0

    def feasible(z, t=None):
        t = tol * scale if t is None else t
        if A.shape[0] and np.any(A @ z - b > t * (1 + np.linalg.norm(A, axis=1))):
            return False
        if E.shape[0] and np.any(np.abs(E @ z - f) > t * (1 + np.linalg.norm(E, axis=1))):
            return False
        return True

    if feasible(y, 0.0):
        return y.copy()
    eq_rank = np.linalg.matrix_rank(E) if E.shape[0] else 0
    best, best_d = None, np.inf
    m = A.shape[0]
    for size in range(0, min(m, n - eq_rank) + 1):
        for idx in itertools.combinations(range(m), size):
            M = np.vstack([E, A[list(idx)]]) if size else E
            c = np.concatenate([f, b[list(idx)]]) if size else f
            if M.shape[0] and np.linalg.matrix_rank(M) < M.shape[0]:
                continue
            z = _affine_project(y, M, c)
            if not feasible(z):
                continue
            d = float(np.linalg.norm(z - y))
            if d < best_d:
                best, best_d = z, d
    if best is None:
        raise EmptySetError("polyhedron appears to be empty")
    return best
