"""Small max-min linear program solved by enumerating vertices of the feasible set."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass
class MaxMinSolution:
    c: np.ndarray
    value: float


def max_min_weights(L, tol: float = 1e-12) -> MaxMinSolution:
    """Maximise t over c in the probability simplex subject to L @ c >= t (row-wise).

    L has one row per constraint and one column per weight. The optimum sits at a
    vertex of the polytope in (c, t), so every choice of n active inequalities is
    tried together with sum(c) = 1.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    m, n = L.shape
    # inequality rows a @ (c, t) >= 0
    rows = [np.append(L[k], -1.0) for k in range(m)]
    rows += [np.append(np.eye(n)[i], 0.0) for i in range(n)]
    rows = np.array(rows)
    eq = np.append(np.ones(n), 0.0)
    best = None
    for active in itertools.combinations(range(rows.shape[0]), n):
        A = np.vstack([rows[list(active)], eq])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        if abs(np.linalg.det(A)) < 1e-14:
            continue
        z = np.linalg.solve(A, b)
        c, t = z[:n], z[n]
        if np.any(c < -tol) or np.any(L @ c - t < -tol * max(1.0, np.abs(L).max())):
            continue
        if best is None or t > best.value + tol:
            best = MaxMinSolution(np.clip(c, 0.0, None) / np.clip(c, 0.0, None).sum(), float(t))
    if best is None:  # only possible for degenerate inputs; fall back to uniform weights
        c = np.full(n, 1.0 / n)
        best = MaxMinSolution(c, float((L @ c).min()))
    return best
