"""Piecewise-deterministic limit: replicator flow between environment switches."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from .env import EnvironmentModel, check_simplex, full_abundances
from .errors import IntegrationError, ModelError

DEFAULT_H_MAX = 1e-3


def flow_step(x, s, dt: float, h_max: float = DEFAULT_H_MAX) -> np.ndarray:
    """Advance free coordinates x along the flow of fitness s for time dt.

    Integration runs in log-ratio coordinates, so faces of the simplex stay invariant
    and abundances never leave [0, 1].
    """
    if dt < 0 or not math.isfinite(dt):
        raise IntegrationError(f"dt must be finite and >= 0, got {dt}", state=x)
    x = check_simplex(x)
    s = np.asarray(s, dtype=float)
    if s.size != x.size:
        raise ModelError(f"fitness has {s.size} entries for {x.size} free coordinates")
    out = K.flow_full(full_abundances(x), np.append(s, 0.0), float(dt), float(h_max))
    if not np.all(np.isfinite(out)):
        raise IntegrationError("non-finite state after integration", state=out)
    return out[:-1]


def closed_form_flow_1d(x0: float, s: float, t: float) -> float:
    """Exact two-species flow: solves log x - (1+s) log(1-x) = const + s t by bisection.

    The root is bracketed in the logit variable u = log(x / (1-x)).
    """
    if x0 in (0.0, 1.0) or s == 0.0:
        return float(x0)

    def phi(u):
        # log x - (1+s) log(1-x) with x = expit(u)
        return -np.logaddexp(0.0, -u) + (1.0 + s) * np.logaddexp(0.0, u)

    u0 = math.log(x0) - math.log1p(-x0)
    target = phi(u0) + s * t
    lo, hi = u0, u0
    step = 1.0
    while phi(lo) > target:
        lo -= step
        step *= 2
    step = 1.0
    while phi(hi) < target:
        hi += step
        step *= 2
    u = brentq(lambda v: phi(v) - target, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(1.0 / (1.0 + math.exp(-u)))


def sample_switch(env_index: int, Q, rng: np.random.Generator) -> tuple[float, int]:
    """Holding time and next environment. Absorbing states give (inf, env_index)."""
    Q = np.asarray(Q, dtype=float)
    rate = -Q[env_index, env_index]
    if rate <= 0:
        return math.inf, env_index
    hold = rng.standard_exponential() / rate
    return float(hold), int(K.next_env(Q, env_index, rng.random()))


def sample_env_path(Q, env0: int, T: float, rng: np.random.Generator):
    """Jump times in (0, T) and the environment entered at each jump."""
    Q = np.ascontiguousarray(Q, dtype=float)
    rmax = float(np.max(-np.diag(Q))) if Q.shape[0] > 1 else 0.0
    n = int(rmax * T + 10 * math.sqrt(rmax * T + 1) + 16)
    while True:
        E = rng.standard_exponential(n)
        V = rng.random(n)
        times, states, m = K.chain_from_uniforms(Q, int(env0), float(T), E, V)
        if m >= 0:
            return times[:m].copy(), states[:m].copy()
        n *= 2


@dataclass
class PdmpPath:
    """Dense samples plus the state at every environment switch.

    `x_full` holds all S+1 abundances so that tiny values of the last species
    are not lost to cancellation.
    """

    t: np.ndarray
    x_full: np.ndarray
    env: np.ndarray
    jump_times: np.ndarray
    jump_states: np.ndarray
    jump_x_full: np.ndarray
    env0: int

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def x(self) -> np.ndarray:
        return self.x_full[:, :-1]

    @property
    def S(self) -> int:
        return self.x_full.shape[1] - 1

    def breakpoints(self) -> list[tuple[float, np.ndarray, int]]:
        """(time, free coordinates, environment entered) for t = 0 and every switch."""
        out = [(0.0, self.x[0].copy(), int(self.env0))]
        for t, xf, e in zip(self.jump_times, self.jump_x_full, self.jump_states):
            out.append((float(t), xf[:-1].copy(), int(e)))
        return out

    def to_csv(self, path) -> None:
        write_path_csv(path, self.t, self.x, self.env)


def write_path_csv(path, t, x, env) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    S = x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *[f"x_{i + 1}" for i in range(S)], "env_index"])
        for ti, xi, ei in zip(t, x, env):
            w.writerow([repr(float(ti)), *[repr(float(v)) for v in xi], int(ei)])


def simulate_pdmp(x0, env0: int, env: EnvironmentModel, T: float, dt_sample: float = 0.01,
                  seed=None, h_max: float = DEFAULT_H_MAX) -> PdmpPath:
    if T <= 0 or dt_sample <= 0:
        raise ModelError("T and dt_sample must be positive")
    if not 0 <= env0 < env.K:
        raise ModelError(f"env0 must be in 0..{env.K - 1}, got {env0}")
    x0 = check_simplex(x0)
    if x0.size != env.S:
        raise ModelError(f"x0 has {x0.size} coordinates, model has S = {env.S}")
    rng = np.random.default_rng(seed)
    jt, js = sample_env_path(env.Q, env0, T, rng)
    ts, xs, es, bp = K.pdmp_path(full_abundances(x0), np.ascontiguousarray(env.full_fitness()),
                                 int(env0), jt, js, float(T), float(dt_sample), float(h_max))
    if not np.all(np.isfinite(xs)):
        raise IntegrationError("non-finite state in sampled path", state=xs[~np.isfinite(xs).all(axis=1)][0])
    return PdmpPath(ts, xs, es, jt, js, bp, int(env0))


def _nodes(path: PdmpPath):
    """Time nodes with states: dense samples plus both sides of every switch."""
    m = path.jump_times.size
    prev_env = np.concatenate([[path.env0], path.jump_states[:-1]]) if m else np.empty(0, int)
    t = np.concatenate([path.t, path.jump_times, path.jump_times])
    x = np.concatenate([path.x_full, path.jump_x_full, path.jump_x_full])
    e = np.concatenate([path.env, prev_env, path.jump_states])
    rank = np.concatenate([np.full(path.t.size, 2), np.zeros(m, int), np.ones(m, int)])
    order = np.lexsort((rank, t))
    return t[order], x[order], e[order].astype(int)


def ergodic_average(path: PdmpPath, observable, burn_in: float | None = None) -> float:
    """Time average of observable(x, env) over [burn_in, T] by the trapezoid rule.

    observable receives free coordinates with shape (n, S) and environment indices
    with shape (n,). Switching times are nodes on both sides so that observables
    depending on the environment are integrated without smearing. Default burn-in
    is T / 10.
    """
    T = path.T
    b = T / 10 if burn_in is None else float(burn_in)
    if not 0 <= b < T:
        raise ModelError(f"burn-in {b} must lie in [0, T)")
    t, xf, e = _nodes(path)
    f = np.asarray(observable(xf[:, :-1], e), dtype=float)
    seg = 0.5 * (f[1:] + f[:-1]) * np.diff(t)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    # cumulative integral at the burn-in time, interpolated inside its segment
    j = int(np.searchsorted(t, b, side="right")) - 1
    j = min(max(j, 0), t.size - 2)
    dt = t[j + 1] - t[j]
    if dt > 0:
        w = (b - t[j]) / dt
        fb = f[j] + w * (f[j + 1] - f[j])
        cb = cum[j] + 0.5 * (f[j] + fb) * (b - t[j])
    else:
        cb = cum[j]
    return float((cum[-1] - cb) / (T - b))


@dataclass
class OccupationHistogram:
    edges: list[np.ndarray]
    mass: np.ndarray

    def to_csv(self, path) -> None:
        write_histogram_csv(path, self.edges, self.mass)


def write_histogram_csv(path, edges, mass) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = len(edges)
    header = []
    for a in range(d):
        header += [f"bin_low_{a + 1}", f"bin_high_{a + 1}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*header, "mass"])
        for idx in np.ndindex(*mass.shape):
            row = []
            for a, i in enumerate(idx):
                row += [repr(float(edges[a][i])), repr(float(edges[a][i + 1]))]
            w.writerow([*row, repr(float(mass[idx]))])


def _sample_weights(path: PdmpPath, burn_in: float) -> np.ndarray:
    """Trapezoid weights of the dense samples over [burn_in, T], summing to one."""
    t = path.t
    w = np.zeros(t.size)
    keep = t >= burn_in
    tk = t[keep]
    if tk.size < 2:
        raise ModelError("burn-in leaves fewer than two samples")
    d = np.diff(tk)
    wk = np.zeros(tk.size)
    wk[:-1] += d / 2
    wk[1:] += d / 2
    w[keep] = wk
    return w / w.sum()


def occupation_histogram(path: PdmpPath, bins: int = 100, burn_in: float = 0.0) -> OccupationHistogram:
    """Normalised occupation measure on a regular grid over [0, 1]^S."""
    w = _sample_weights(path, burn_in)
    return histogram_from_samples([path.x], [w], bins, path.S)


def histogram_from_samples(xs, ws, bins: int, S: int) -> OccupationHistogram:
    edges = [np.linspace(0.0, 1.0, bins + 1) for _ in range(S)]
    mass = np.zeros((bins,) * S)
    for x, w in zip(xs, ws):
        h, _ = np.histogramdd(x, bins=edges, weights=w)
        mass += h
    return OccupationHistogram(edges, mass / mass.sum())
