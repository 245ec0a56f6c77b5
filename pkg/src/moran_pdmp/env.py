"""Environment model: fitness per environment and the switching chain."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ModelError

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class SimplexPoint:
    """Abundances of species 1..S; species S+1 holds the remainder."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float).reshape(-1)
        object.__setattr__(self, "coords", check_simplex(c))
        self.coords.setflags(write=False)

    @property
    def S(self) -> int:
        return self.coords.size

    def full(self) -> np.ndarray:
        return full_abundances(self.coords)

    @classmethod
    def from_full(cls, full) -> SimplexPoint:
        full = np.asarray(full, dtype=float)
        return cls(full[:-1])


def check_simplex(x, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate free coordinates; clamp roundoff within `tol` and return a copy."""
    x = np.array(x, dtype=float).reshape(-1)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ModelError(f"invalid simplex coordinates {x!r}")
    if np.any(x < -tol) or x.sum() > 1.0 + tol:
        raise ModelError(f"point {x.tolist()} lies outside the simplex")
    x = np.clip(x, 0.0, 1.0)
    total = x.sum()
    if total > 1.0:
        x = x / total
    return x


def full_abundances(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    rest = max(0.0, 1.0 - float(x.sum()))
    return np.append(x, rest)


@dataclass(frozen=True)
class FitnessVector:
    """Selective advantages of species 1..S over species S+1 in one environment."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)) or np.any(v <= -1.0):
            raise ModelError(f"fitness entries must be finite and > -1, got {v.tolist()}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def full(self) -> np.ndarray:
        return np.append(self.values, 0.0)


def stationary_distribution(Q) -> np.ndarray:
    """Invariant law of an irreducible generator."""
    Q = np.asarray(Q, dtype=float)
    K = Q.shape[0]
    if K == 1:
        return np.ones(1)
    _check_irreducible(Q)
    if K == 2:
        q1, q2 = Q[0, 1], Q[1, 0]
        return np.array([q2, q1]) / (q1 + q2)
    A = Q.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(K)
    b[-1] = 1.0
    p = np.linalg.solve(A, b)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def _check_irreducible(Q: np.ndarray) -> None:
    adj = (Q > 0).astype(int)
    np.fill_diagonal(adj, 0)
    n, labels = connected_components(adj, directed=True, connection="strong")
    if n > 1:
        i = 0
        j = int(np.flatnonzero(labels != labels[0])[0])
        raise ModelError(f"generator is reducible: environments {i} and {j} do not communicate")


def _check_generator(Q: np.ndarray) -> None:
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ModelError(f"generator must be square, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise ModelError("generator has non-finite entries")
    off = Q - np.diag(np.diag(Q))
    if np.any(off < 0):
        i, j = np.argwhere(off < 0)[0]
        raise ModelError(f"negative switching rate Q[{i}][{j}] = {Q[i, j]}")
    scale = max(1.0, float(np.abs(Q).max()))
    rows = Q.sum(axis=1)
    if np.any(np.abs(rows) > 1e-12 * scale * Q.shape[0]):
        i = int(np.argmax(np.abs(rows)))
        raise ModelError(f"generator row {i} sums to {rows[i]}, expected 0")


@dataclass(frozen=True)
class EnvironmentModel:
    """K environments with fitness arrays (K, S) and a generator Q (K, K)."""

    fitness: np.ndarray
    Q: np.ndarray
    p: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        fit = np.array(self.fitness, dtype=float)
        if fit.ndim == 1:
            fit = fit[:, None]
        Q = np.array(self.Q, dtype=float)
        if fit.ndim != 2 or fit.shape[1] < 1:
            raise ModelError(f"fitness must be a K x S array, got shape {fit.shape}")
        _check_generator(Q)
        if Q.shape[0] != fit.shape[0]:
            raise ModelError(f"{fit.shape[0]} fitness rows but generator has size {Q.shape[0]}")
        for row in fit:
            FitnessVector(row)
        p = stationary_distribution(Q)
        for a in (fit, Q, p):
            a.setflags(write=False)
        object.__setattr__(self, "fitness", fit)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "p", p)

    @property
    def K(self) -> int:
        return self.fitness.shape[0]

    @property
    def S(self) -> int:
        return self.fitness.shape[1]

    @property
    def rates(self) -> np.ndarray:
        """Total rate of leaving each environment."""
        return -np.diag(self.Q)

    def full_fitness(self) -> np.ndarray:
        return np.hstack([self.fitness, np.zeros((self.K, 1))])

    def to_dict(self) -> dict:
        return {"fitness": self.fitness.tolist(), "Q": self.Q.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> EnvironmentModel:
        unknown = set(d) - {"fitness", "Q"}
        if unknown:
            raise ModelError(f"unknown model keys {sorted(unknown)}")
        if "fitness" not in d or "Q" not in d:
            raise ModelError("model needs both 'fitness' and 'Q'")
        return cls(d["fitness"], d["Q"])

    @classmethod
    def from_json(cls, text: str) -> EnvironmentModel:
        return cls.from_dict(json.loads(text))

    def renormalized(self, ref: int) -> EnvironmentModel:
        """Re-express fitness relative to species `ref` (1-based) and make it the last species.

        The remaining species keep their relative order.
        """
        full = self.full_fitness()
        r = ref - 1
        rel = (full - full[:, [r]]) / (1.0 + full[:, [r]])
        keep = [k for k in range(self.S + 1) if k != r]
        return EnvironmentModel(rel[:, keep], self.Q)


def per_capita_growth(x, s) -> np.ndarray:
    """F^i = (s^i - A) / (1 + A) for all S+1 species, with A = sum_k s^k x^k."""
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    A = float(s @ x)
    return (np.append(s, 0.0) - A) / (1.0 + A)


def drift_field(x, s) -> np.ndarray:
    """G^i(x) = x^i (s^i - A) / (1 + A) on free coordinates."""
    x = np.asarray(x, dtype=float)
    return x * per_capita_growth(x, s)[:-1]


def jacobian(x, s) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    A = float(s @ x)
    F = (s - A) / (1.0 + A)
    return np.diag(F) - np.outer(x * (1.0 + s), s) / (1.0 + A) ** 2


def jacobian_at_vertex(s, vertex: int) -> np.ndarray:
    """Closed-form Jacobian of G at the vertex where species `vertex` (1-based) is alone.

    Rows and columns follow the natural species order 1..S.
    """
    s = np.asarray(s, dtype=float)
    S = s.size
    if not 1 <= vertex <= S + 1:
        raise ModelError(f"vertex must be in 1..{S + 1}, got {vertex}")
    if vertex == S + 1:
        return np.diag(s)
    i = vertex - 1
    J = np.diag((s - s[i]) / (1.0 + s[i]))
    J[i, :] = -s / (1.0 + s[i])
    return J


def time_homogeneous_eigen(s, vertex: int) -> np.ndarray:
    """Linearised rates at a vertex: (s^k - s^i)/(1 + s^i) for every other species k."""
    full = np.append(np.asarray(s, dtype=float), 0.0)
    i = vertex - 1
    return np.delete((full - full[i]) / (1.0 + full[i]), i)


def is_close_to_zero(v: float, tol: float = 1e-12) -> bool:
    return math.isfinite(v) and abs(v) < tol
