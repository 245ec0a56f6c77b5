"""Finite-population Moran process in a randomly switching environment."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._parallel import int_seed, trajectory_seed
from .env import EnvironmentModel, drift_field
from .errors import ModelError
from .pdmp import write_path_csv


@dataclass(frozen=True)
class MoranState:
    """Counts of all S+1 species and the current environment index."""

    counts: tuple
    env_index: int

    @property
    def J(self) -> int:
        return int(sum(self.counts))

    def x(self) -> np.ndarray:
        c = np.asarray(self.counts, dtype=float)
        return c[:-1] / c.sum()


@dataclass
class MoranConfig:
    env: EnvironmentModel
    J: int
    counts0: tuple
    env0: int = 0
    n_events: int = 0
    seed: int = 0
    alpha: np.ndarray | None = None
    record_every: int | None = None
    stop_at_absorption: bool = False

    def __post_init__(self):
        if self.J < 1:
            raise ModelError("population size J must be positive")
        c = np.asarray(self.counts0, dtype=np.int64)
        if c.size != self.env.S + 1 or np.any(c < 0) or c.sum() != self.J:
            raise ModelError(f"counts {list(self.counts0)} must be {self.env.S + 1} non-negative integers summing to J = {self.J}")
        if not 0 <= self.env0 < self.env.K:
            raise ModelError(f"env0 must be in 0..{self.env.K - 1}")
        a = np.ones(self.env.K) if self.alpha is None else np.asarray(self.alpha, dtype=float)
        if a.shape != (self.env.K,) or np.any(a <= 0):
            raise ModelError("alpha needs one positive entry per environment")
        if np.any(a * self.env.rates / self.J > 1.0):
            raise ModelError("alpha * rate / J exceeds 1; increase J")
        self.alpha = a
        if self.record_every is None:
            self.record_every = max(1, math.ceil(self.J / 100))


def counts_from_x(x, J: int) -> np.ndarray:
    """Round free coordinates to counts; the last species takes the remainder."""
    x = np.asarray(x, dtype=float)
    c = np.rint(x * J).astype(np.int64)
    rest = J - c.sum()
    if rest < 0:
        raise ModelError(f"x = {x.tolist()} rounds to more than J = {J} individuals")
    return np.append(c, rest)


def reproduction_probabilities(x, s) -> np.ndarray:
    """Probability that the parent belongs to each of the S+1 species."""
    full = np.append(np.asarray(x, dtype=float), 0.0)
    full[-1] = 1.0 - full.sum()
    w = full * (1.0 + np.append(s, 0.0))
    return w / w.sum()


def transition_probabilities(state: MoranState, s) -> dict:
    """Map (gaining species, losing species) -> probability, 1-based labels.

    Pairs with the same species twice leave the counts unchanged and are
    collected under the key None.
    """
    c = np.asarray(state.counts, dtype=float)
    x = c / c.sum()
    pi = reproduction_probabilities(x[:-1], s)
    out = {}
    stay = 0.0
    for i in range(c.size):
        for j in range(c.size):
            p = pi[i] * x[j]
            if i == j:
                stay += p
            elif p > 0:
                out[(i + 1, j + 1)] = p
    out[None] = stay
    return out


def moran_step(state: MoranState, env: EnvironmentModel, J: int, rng: np.random.Generator,
               alpha=None) -> MoranState:
    """One birth-death event followed by a possible environment switch."""
    counts = np.asarray(state.counts, dtype=np.int64).copy()
    if counts.sum() != J:
        raise ModelError("state counts do not sum to J")
    e = state.env_index
    K.moran_event(counts, env.full_fitness()[e], J, rng.random(), rng.random())
    a = 1.0 if alpha is None else float(np.asarray(alpha)[e])
    pj = a * env.rates[e] / J
    if pj > 0 and rng.random() < pj:
        e = int(K.next_env(np.ascontiguousarray(env.Q), e, rng.random()))
    return MoranState(tuple(int(v) for v in counts), e)


@dataclass
class MoranPath:
    """Recorded states; time is the event count divided by J."""

    events: np.ndarray
    counts: np.ndarray
    env: np.ndarray
    J: int
    extra: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.events / self.J

    @property
    def x(self) -> np.ndarray:
        return self.counts[:, :-1] / self.J

    def to_csv(self, path) -> None:
        write_path_csv(path, self.t, self.x, self.env)


def simulate_moran(config: MoranConfig) -> MoranPath:
    ev, c, e = K.moran_path(
        np.asarray(config.counts0, dtype=np.int64), int(config.env0),
        np.ascontiguousarray(config.env.full_fitness()), np.ascontiguousarray(config.env.Q),
        np.asarray(config.alpha, dtype=float), int(config.J), int(config.n_events),
        int(config.record_every), int_seed(trajectory_seed(config.seed, 0)),
        bool(config.stop_at_absorption),
    )
    return MoranPath(ev, c, e, config.J)


@dataclass
class OneStepMoments:
    mean: np.ndarray
    mean_se: np.ndarray
    var: np.ndarray
    drift: np.ndarray
    n: int


def one_step_moments(x, s, J: int, n: int, seed) -> OneStepMoments:
    """Empirical mean and variance of one increment of X from a fixed state.

    Compared against the drift G(x) / J; the variance is O(1/J^2).
    """
    x = np.asarray(x, dtype=float)
    S = x.size
    counts = counts_from_x(x, J)
    xf = counts / J
    rng = np.random.default_rng(seed)
    pi = reproduction_probabilities(xf[:-1], s)
    parent = rng.choice(S + 1, size=n, p=pi)
    dead = rng.choice(S + 1, size=n, p=xf)
    inc = np.zeros((n, S))
    rows = np.arange(n)
    m = parent < S
    inc[rows[m], parent[m]] += 1.0 / J
    m = dead < S
    inc[rows[m], dead[m]] -= 1.0 / J
    return OneStepMoments(inc.mean(axis=0), inc.std(axis=0, ddof=1) / math.sqrt(n),
                          inc.var(axis=0, ddof=1), drift_field(xf[:-1], s) / J, n)
