"""Invasion rates, invariant densities and persistence verdicts for S <= 2."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import integrate

from ._parallel import map_indexed, trajectory_seed
from .env import EnvironmentModel
from .errors import ModelError
from .lp import max_min_weights
from .pdmp import DEFAULT_H_MAX, ergodic_average, simulate_pdmp

ZERO_TOL = 1e-12
LP_EPS = 1e-6


# ---------------------------------------------------------------- two species

class Regime(str, Enum):
    PERSISTENT = "Persistent"
    EXTINCTION_1 = "Extinction1"  # X -> 0
    EXTINCTION_2 = "Extinction2"  # X -> 1
    DEGENERATE = "DegenerateBoundary"


def _require_S(env: EnvironmentModel, S: int) -> None:
    if env.S != S:
        raise ModelError(f"operation needs S = {S}, model has S = {env.S}")


def growth_rates_2species(env: EnvironmentModel) -> tuple[float, float]:
    """(Lambda0, Lambda1): average growth of species 1 when rare, and of species 2 when rare."""
    _require_S(env, 1)
    s = env.fitness[:, 0]
    lam0, lam1 = float(env.p @ s), float(-env.p @ (s / (1.0 + s)))
    # Jensen: a species that loses on average when rare forces the other to win when rare
    assert lam0 >= -ZERO_TOL or lam1 > 0, (lam0, lam1)
    return lam0, lam1


def classify_2species(lam0: float, lam1: float, tol: float = ZERO_TOL) -> Regime:
    if abs(lam0) < tol or abs(lam1) < tol:
        return Regime.DEGENERATE
    if lam0 < 0:
        return Regime.EXTINCTION_1
    if lam1 < 0:
        return Regime.EXTINCTION_2
    return Regime.PERSISTENT


def _singular_integral(phi, a: float, b: float, lo: float, hi: float) -> float:
    """Integral of x^(a-1) (1-x)^(b-1) phi(x) over [lo, hi] within [0, 1].

    Near 0 substitute x = u^(1/a); near 1 substitute 1 - x = v^(1/b). Both remove
    the endpoint singularity, leaving smooth integrands.
    """
    total = 0.0
    mid = 0.5
    l0, h0 = lo, min(hi, mid)
    if h0 > l0:
        def f0(u):
            x = u ** (1.0 / a)
            return (1.0 - x) ** (b - 1.0) * phi(x) / a
        total += integrate.quad(f0, l0 ** a, h0 ** a, epsabs=0, epsrel=1e-13, limit=200)[0]
    l1, h1 = max(lo, mid), hi
    if h1 > l1:
        def f1(v):
            x = 1.0 - v ** (1.0 / b)
            return x ** (a - 1.0) * phi(x) / b
        total += integrate.quad(f1, (1.0 - h1) ** b, (1.0 - l1) ** b, epsabs=0, epsrel=1e-13, limit=200)[0]
    return total


@dataclass
class DensityModel:
    """Invariant densities h_1, h_2 of the two-species, two-environment process.

    h_i = H / |g_i| with H = C (1-x)^b x^a, g_i = s_i x (1-x) / (1 + s_i x).
    """

    s: np.ndarray
    q: np.ndarray
    alpha: float
    beta: float
    a: float
    b: float
    C: float = field(init=False)

    def __post_init__(self):
        self.C = 1.0 / _singular_integral(self._weight, self.a, self.b, 0.0, 1.0)

    def _weight(self, x):
        s1, s2 = self.s
        return (1 + s1 * x) / abs(s1) + (1 + s2 * x) / abs(s2)

    def g(self, i: int, x):
        s = self.s[i]
        return s * x * (1 - x) / (1 + s * x)

    def dg(self, i: int, x):
        s = self.s[i]
        return s * ((1 - 2 * x) * (1 + s * x) - s * x * (1 - x)) / (1 + s * x) ** 2

    def h(self, i: int, x):
        x = np.asarray(x, dtype=float)
        s = self.s[i]
        return self.C * x ** (self.a - 1) * (1 - x) ** (self.b - 1) * (1 + s * x) / abs(s)

    def dh(self, i: int, x):
        x = np.asarray(x, dtype=float)
        s = self.s[i]
        return self.h(i, x) * ((self.a - 1) / x - (self.b - 1) / (1 - x) + s / (1 + s * x))

    def marginal(self, x):
        return self.h(0, x) + self.h(1, x)

    def bin_masses(self, edges) -> np.ndarray:
        edges = np.asarray(edges, dtype=float)
        return np.array([self.C * _singular_integral(self._weight, self.a, self.b, lo, hi)
                         for lo, hi in zip(edges[:-1], edges[1:])])


def invariant_density_2species(env: EnvironmentModel) -> DensityModel:
    _require_S(env, 1)
    if env.K != 2:
        raise ModelError("closed-form density needs exactly two environments")
    lam0, lam1 = growth_rates_2species(env)
    if classify_2species(lam0, lam1) != Regime.PERSISTENT:
        raise ModelError(f"no interior invariant law: Lambda0 = {lam0}, Lambda1 = {lam1}")
    s = env.fitness[:, 0].copy()
    q = np.array([env.Q[0, 1], env.Q[1, 0]])
    alpha = (q[0] + q[1]) / abs(s[0] * s[1])
    beta = alpha * (1 + s[0]) * (1 + s[1])
    return DensityModel(s, q, alpha, beta, alpha * lam0, beta * lam1)


def density_exponents(s1, s2, q1, q2):
    """(alpha Lambda0 - 1, beta Lambda1 - 1): exponents of x and 1-x in h_i.

    Plain arithmetic, so exact rationals go through unchanged. Negative means the
    density blows up at that endpoint, positive means it vanishes there.
    """
    p1 = q2 / (q1 + q2)
    p2 = q1 / (q1 + q2)
    lam0 = p1 * s1 + p2 * s2
    lam1 = -(p1 * s1 / (1 + s1) + p2 * s2 / (1 + s2))
    alpha = (q1 + q2) / abs(s1 * s2)
    beta = alpha * (1 + s1) * (1 + s2)
    return alpha * lam0 - 1, beta * lam1 - 1


def endpoint_behaviour(s1, s2, q1, q2) -> tuple[str, str]:
    """'explode' or 'vanish' (or 'finite' on the threshold) at x = 0 and x = 1."""
    def word(e):
        return "explode" if e < 0 else ("vanish" if e > 0 else "finite")
    e0, e1 = density_exponents(s1, s2, q1, q2)
    return word(e0), word(e1)


def symmetric_rate_thresholds(s1, s2):
    """Switching rates q (q1 = q2 = q) at which alpha Lambda0 = 1 and beta Lambda1 = 1."""
    prod = abs(s1 * s2)
    q0 = prod / (s1 + s2) if s1 + s2 > 0 else None
    d = -(s1 + s2 + 2 * s1 * s2)
    q1 = prod / d if d > 0 else None
    return q0, q1


def fokker_planck_residual(density: DensityModel, grid=None, funcs=None) -> tuple[float, float]:
    """Sup-norm residuals of q1 h1 - q2 h2 = -(g1 h1)' and q1 h1 - q2 h2 = (g2 h2)'.

    funcs = (h1, dh1, h2, dh2) replaces the closed-form densities, e.g. to check
    that a perturbed candidate is rejected.
    """
    x = np.linspace(1e-3, 1 - 1e-3, 2001) if grid is None else np.asarray(grid, dtype=float)
    if funcs is None:
        h1, dh1 = density.h(0, x), density.dh(0, x)
        h2, dh2 = density.h(1, x), density.dh(1, x)
    else:
        h1, dh1, h2, dh2 = (np.asarray(f(x), dtype=float) for f in funcs)
    q1, q2 = density.q
    lhs = q1 * h1 - q2 * h2
    d1 = density.dg(0, x) * h1 + density.g(0, x) * dh1
    d2 = density.dg(1, x) * h2 + density.g(1, x) * dh2
    return float(np.max(np.abs(lhs + d1))), float(np.max(np.abs(lhs - d2)))


# ---------------------------------------------------------------- three species

# edge i (species i absent) -> (coordinate species, reference species), 1-based
EDGE_SPECIES = {1: (2, 3), 2: (1, 3), 3: (2, 1)}


def edge_reduced_model(env: EnvironmentModel, edge: int) -> EnvironmentModel:
    """Two-species model on the edge where species `edge` is absent."""
    _require_S(env, 2)
    c, r = EDGE_SPECIES[edge]
    full = env.full_fitness()
    sig = (full[:, c - 1] - full[:, r - 1]) / (1.0 + full[:, r - 1])
    return EnvironmentModel(sig[:, None], env.Q)


@dataclass
class EdgeRates:
    """Lambda0^i and Lambda1^i for the three edges (index i - 1)."""

    lambda0: np.ndarray
    lambda1: np.ndarray

    def exists(self, edge: int, tol: float = ZERO_TOL) -> bool:
        return edge_ergodic_exists(self, edge, tol)


def edge_growth_rates_3species(env: EnvironmentModel) -> EdgeRates:
    _require_S(env, 2)
    l0, l1 = zip(*(growth_rates_2species(edge_reduced_model(env, i)) for i in (1, 2, 3)))
    return EdgeRates(np.array(l0), np.array(l1))


def edge_ergodic_exists(rates: EdgeRates, edge: int, tol: float = ZERO_TOL) -> bool:
    """An ergodic measure lives on the edge iff both of its growth rates are positive."""
    return bool(rates.lambda0[edge - 1] > tol and rates.lambda1[edge - 1] > tol)


def edge_is_boundary(rates: EdgeRates, edge: int, tol: float = ZERO_TOL) -> bool:
    return bool(abs(rates.lambda0[edge - 1]) < tol or abs(rates.lambda1[edge - 1]) < tol)


def vertex_invasion_rates(env: EnvironmentModel) -> np.ndarray:
    """M[i, j] = invasion rate of species i+1 at the vertex where species j+1 is alone."""
    full = env.full_fitness()
    n = env.S + 1
    M = np.zeros((n, n))
    for j in range(n):
        M[:, j] = env.p @ ((full - full[:, [j]]) / (1.0 + full[:, [j]]))
        M[j, j] = 0.0
    return M


def lambda_vertex(env: EnvironmentModel, species: int) -> float:
    M = vertex_invasion_rates(env)
    j = species - 1
    return float(np.max(np.delete(M[:, j], j)))


def full_support_determinant(env: EnvironmentModel) -> float:
    _require_S(env, 2)
    if env.K != 3:
        raise ModelError("full-support determinant needs exactly three environments")
    (s1, s2, s3), (r1, r2, r3) = env.fitness[:, 0], env.fitness[:, 1]
    return float(s2 * r3 - r2 * s3 + s3 * r1 - s1 * r3 + s1 * r2 - s2 * r1)


@dataclass
class Configuration:
    """Relabelling of a three-species, two-environment model into the standard form.

    Canonical species k is original species `species[k-1]`; canonical environment j
    is original environment `envs[j-1]`. In the standard form the third species is
    the reference, s1 > 0 > r1 and r2 > 0 > s2.
    """

    species: tuple
    envs: tuple
    s: np.ndarray
    r: np.ndarray


def normalize_configuration(env: EnvironmentModel) -> Configuration:
    _require_S(env, 2)
    if env.K != 2:
        raise ModelError("configuration normalisation needs exactly two environments")
    full = env.full_fitness()
    for perm in itertools.permutations((1, 2, 3)):
        ref = perm[2] - 1
        rel = (full - full[:, [ref]]) / (1.0 + full[:, [ref]])
        for envs in ((0, 1), (1, 0)):
            s = rel[list(envs), perm[0] - 1]
            r = rel[list(envs), perm[1] - 1]
            if s[0] > 0 > r[0] and r[1] > 0 > s[1]:
                return Configuration(perm, envs, s, r)
    raise ModelError("unsupported configuration: model cannot be relabelled so that "
                     "s1 > 0 > r1 and r2 > 0 > s2")


def _sign(v: float, tol: float) -> int:
    return 0 if abs(v) < tol else (1 if v > 0 else -1)


@dataclass
class EdgeSigns:
    """sign of lambda_i(nu_i) keyed by original species label i."""

    signs: dict
    configuration: Configuration


def edge_invasion_sign_2env(env: EnvironmentModel, tol: float = ZERO_TOL) -> EdgeSigns:
    cfg = normalize_configuration(env)
    (s1, s2), (r1, r2) = cfg.s, cfg.r
    # brackets multiplied through by their (positive) denominators
    canon = (
        s1 * abs(r2) + s2 * abs(r1),
        r1 * abs(s2) + r2 * abs(s1),
        -r1 * abs(s2 - r2) - r2 * abs(s1 - r1),
    )
    # the three brackets vanish together exactly when s1 r2 = s2 r1
    if abs(s1 * r2 - s2 * r1) < tol:
        canon = (0.0, 0.0, 0.0)
    signs = {cfg.species[k]: _sign(canon[k], tol) for k in range(3)}
    return EdgeSigns(signs, cfg)


# ---------------------------------------------------------------- Monte-Carlo edge rates

@dataclass
class InvasionRateEstimate:
    edge: int
    mean: float
    std_error: float
    T: float
    n_traj: int


@dataclass
class MCOptions:
    T: float = 80.0
    n_traj: int = 1000
    seed: int = 0
    burn_in: float | None = None
    x0: float = 0.5
    env0: int = 0
    dt_sample: float = 0.01
    h_max: float = DEFAULT_H_MAX
    threads: int | None = None


def _edge_observable(env: EnvironmentModel, edge: int):
    c, r = EDGE_SPECIES[edge]
    full = env.full_fitness()

    def f(z, e):
        s = full[e]
        z = z[:, 0]
        A = s[:, c - 1] * z + s[:, r - 1] * (1.0 - z)
        return (s[:, edge - 1] - A) / (1.0 + A)

    return f


def edge_invasion_rate_mc(env: EnvironmentModel, edge: int, opts: MCOptions | None = None) -> InvasionRateEstimate:
    """Mean over trajectories of the time-averaged growth of the absent species on an edge."""
    opts = opts or MCOptions()
    if opts.T <= 0 or opts.n_traj < 2:
        raise ModelError("need T > 0 and at least two trajectories")
    rates = edge_growth_rates_3species(env)
    if not edge_ergodic_exists(rates, edge):
        raise ModelError(f"edge {edge} carries no ergodic measure "
                         f"(Lambda0 = {rates.lambda0[edge - 1]}, Lambda1 = {rates.lambda1[edge - 1]})")
    reduced = edge_reduced_model(env, edge)
    obs = _edge_observable(env, edge)

    def one(j):
        path = simulate_pdmp([opts.x0], opts.env0, reduced, opts.T, opts.dt_sample,
                             seed=trajectory_seed(opts.seed, edge, j), h_max=opts.h_max)
        return ergodic_average(path, obs, opts.burn_in)

    vals = np.array(map_indexed(one, opts.n_traj, opts.threads))
    return InvasionRateEstimate(edge, float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size)),
                                opts.T, opts.n_traj)


# ---------------------------------------------------------------- verdict

@dataclass
class PersistenceVerdict:
    kind: str
    species: int | None = None
    sure: bool = False
    certificate: dict | None = None
    reason: str = ""
    lambdas: dict = field(default_factory=dict)
    edges: list = field(default_factory=list)
    permutation: dict | None = None

    def label(self) -> str:
        if self.kind in ("ExtinctionOf", "InvasionPossibleBy"):
            return f"{self.kind}({self.species})"
        return self.kind

    def summary(self) -> str:
        text = self.label()
        if self.kind == "Persistent":
            c = ",".join(f"{v:g}" for v in self.certificate["c"])
            text += f" (c = [{c}], margin {self.certificate['margin']:.6g})"
        elif self.sure:
            text += " [almost sure]"
        if self.reason:
            text += f": {self.reason}"
        return text

    def to_report(self) -> dict:
        return {
            "lambdas": self.lambdas,
            "edges": self.edges,
            "verdict": self.label(),
            "sure": self.sure,
            "reason": self.reason,
            "certificate": self.certificate,
            "permutation": self.permutation,
        }


def _always_best(full: np.ndarray) -> int | None:
    for i in range(full.shape[1]):
        others = np.delete(full, i, axis=1)
        if np.all(full[:, [i]] > others):
            return i + 1
    return None


def _dominated(full: np.ndarray) -> tuple[int, int] | None:
    n = full.shape[1]
    for a in range(n):
        for b in range(n):
            if a != b and np.all(full[:, a] < full[:, b]):
                return a + 1, b + 1
    return None


def _certificate(L: np.ndarray, eps: float) -> dict | None:
    """Weights c >= 1 with min_mu L @ c >= eps, or None."""
    ones = np.ones(L.shape[1])
    if np.min(L @ ones) / ones.sum() >= eps:
        c = ones
    else:
        sol = max_min_weights(L)
        if sol.value < eps:
            return None
        c = sol.c
        worst = float(np.min(L.sum(axis=1)))
        if np.any(c <= 0):
            # move strictly inside while keeping half the margin
            delta = sol.value / (2 * abs(worst)) if worst < 0 else 1.0
            c = c + delta
        c = c / c.min()
    margin = float(np.min(L @ c))
    if margin / c.sum() < eps:
        return None
    return {"c": c.tolist(), "margin": margin}


def _verdict_1species(env: EnvironmentModel) -> PersistenceVerdict:
    lam0, lam1 = growth_rates_2species(env)
    lambdas = {"Lambda0": lam0, "Lambda1": lam1}
    regime = classify_2species(lam0, lam1)
    if regime == Regime.DEGENERATE:
        name = "Lambda0" if abs(lam0) < ZERO_TOL else "Lambda1"
        return PersistenceVerdict("Degenerate", reason=f"{name} = {lambdas[name]:.3g} is within 1e-12 of zero",
                                  lambdas=lambdas)
    if regime == Regime.EXTINCTION_1:
        return PersistenceVerdict("ExtinctionOf", 1, True, {"measure": "vertex 2", "rate": lam0},
                                  "species 1 has negative growth when rare", lambdas)
    if regime == Regime.EXTINCTION_2:
        return PersistenceVerdict("ExtinctionOf", 2, True, {"measure": "vertex 1", "rate": lam1},
                                  "species 2 has negative growth when rare", lambdas)
    L = np.array([[lam0, 0.0], [0.0, lam1]])
    return PersistenceVerdict("Persistent", certificate=_certificate(L, LP_EPS), lambdas=lambdas)


def persistence_verdict(env: EnvironmentModel, mc: MCOptions | None = None) -> PersistenceVerdict:
    """Decision cascade for two or three species.

    Edge invasion rates come from closed-form signs with two environments and
    from Monte-Carlo estimates otherwise.
    """
    if env.S == 1:
        return _verdict_1species(env)
    if env.S != 2:
        raise ModelError(f"persistence analysis supports S in {{1, 2}}, got S = {env.S}")
    full = env.full_fitness()
    M = vertex_invasion_rates(env)
    big = np.array([lambda_vertex(env, i) for i in (1, 2, 3)])
    rates = edge_growth_rates_3species(env)
    lambdas = {
        "vertex": M.tolist(),
        "Lambda_vertex": big.tolist(),
        "edge_Lambda0": rates.lambda0.tolist(),
        "edge_Lambda1": rates.lambda1.tolist(),
    }
    v = PersistenceVerdict("Inconclusive", lambdas=lambdas)

    best = _always_best(full)
    if best is not None:
        v.kind, v.species, v.sure = "InvasionPossibleBy", best, True
        v.reason = f"species {best} has the highest fitness in every environment"
        v.certificate = {"measure": f"vertex {best}", "rate": float(big[best - 1])}
        return v
    dom = _dominated(full)
    if dom is not None:
        v.kind, v.species, v.sure = "ExtinctionOf", dom[0], True
        v.reason = f"species {dom[0]} is always less fit than species {dom[1]}"
        return v

    near = [i for i in range(3) if abs(big[i]) < ZERO_TOL]
    if near:
        v.kind = "Degenerate"
        v.reason = f"Lambda_vertex of species {near[0] + 1} is within 1e-12 of zero"
        return v
    cfg = None
    if env.K == 2:
        try:
            cfg = normalize_configuration(env)
            v.permutation = {"species": list(cfg.species), "environments": list(cfg.envs)}
        except ModelError:
            cfg = None
    neg = [i for i in range(3) if big[i] < 0]
    if neg:
        i0 = neg[0] + 1
        v.kind, v.species = "InvasionPossibleBy", i0
        v.reason = f"vertex {i0} is attracting (Lambda = {big[i0 - 1]:.6g})"
        v.certificate = {"measure": f"vertex {i0}", "rate": float(big[i0 - 1])}
        v.sure = cfg is not None and cfg.species[2] == i0
        return v

    # ergodic measures on the boundary: vertices, then edges
    rows = [M[:, j] for j in range(3)]
    for i in (1, 2, 3):
        if edge_is_boundary(rates, i):
            v.kind = "Degenerate"
            v.reason = f"edge {i} growth rates are within 1e-12 of zero"
            return v
    present = [i for i in (1, 2, 3) if rates.exists(i)]
    signs = None
    if present and env.K == 2:
        if cfg is None:
            v.kind = "Degenerate"
            v.reason = "edge measures exist but the model has no strict standard configuration"
            return v
        signs = edge_invasion_sign_2env(env).signs
    for i in present:
        entry = {"edge": i, "exists": True}
        if signs is not None:
            val, se = float(signs[i]), 0.0
            entry["sign"] = signs[i]
            if signs[i] == 0:
                v.kind, v.reason = "Degenerate", f"invasion rate on edge {i} is zero"
                v.edges.append(entry)
                return v
        else:
            est = edge_invasion_rate_mc(env, i, mc)
            val, se = est.mean, est.std_error
            entry.update(mean=val, std_error=se, T=est.T, n_traj=est.n_traj)
            if abs(val) <= 2 * se:
                v.edges.append(entry)
                v.kind, v.reason = "Degenerate", f"Monte-Carlo invasion rate on edge {i} is within 2 SE of zero"
                return v
        v.edges.append(entry)
        if val < 0:
            v.kind, v.species, v.sure = "ExtinctionOf", i, False
            v.certificate = {"measure": f"edge {i}", "rate": val}
            v.reason = f"species {i} cannot invade the edge where it is absent"
            return v
        row = np.zeros(3)
        row[i - 1] = val
        rows.append(row)
    v.edges += [{"edge": i, "exists": False} for i in (1, 2, 3) if i not in present]
    cert = _certificate(np.array(rows), LP_EPS)
    if cert is not None:
        v.kind, v.certificate = "Persistent", cert
        v.reason = "every boundary ergodic measure is invadable"
    else:
        v.reason = "no positive weights make every boundary measure repelling"
    return v
