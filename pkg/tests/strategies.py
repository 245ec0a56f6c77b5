from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

fitness_value = st.floats(-0.9, 3.0, allow_nan=False)
rate = st.floats(0.1, 5.0, allow_nan=False)


@st.composite
def simplex_points(draw, S, allow_faces=True):
    w = np.array([draw(st.floats(0.0 if allow_faces else 1e-3, 1.0)) for _ in range(S + 1)])
    if w.sum() == 0:
        w[-1] = 1.0
    x = w / w.sum()
    return x[:-1]


@st.composite
def generators(draw, K):
    if K == 1:
        return np.zeros((1, 1))
    Q = np.array([[draw(rate) for _ in range(K)] for _ in range(K)])
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


@st.composite
def models(draw, S, K=None):
    from moran_pdmp.env import EnvironmentModel
    K = K or draw(st.integers(1, 3))
    fit = [[draw(fitness_value) for _ in range(S)] for _ in range(K)]
    return EnvironmentModel(fit, draw(generators(K)))
