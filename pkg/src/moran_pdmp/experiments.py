"""Ensemble runs, the 1/J convergence experiment, density comparisons and the report bundle."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import _kernels as K
from ._parallel import int_seed, map_indexed, trajectory_seed
from .env import EnvironmentModel, check_simplex
from .errors import ModelError
from .moran import counts_from_x
from .pdmp import DEFAULT_H_MAX, _sample_weights, ergodic_average, histogram_from_samples, simulate_pdmp
from .persistence import invariant_density_2species
from .svg import line_plot


# ---------------------------------------------------------------- observables

@dataclass(frozen=True)
class Polynomial:
    """sum_m coefs[m] * prod_k x_k ** exponents[m][k], total degree at most 3."""

    coefs: tuple
    exponents: tuple

    def __post_init__(self):
        e = np.asarray(self.exponents, dtype=np.int64)
        if e.ndim != 2 or e.shape[0] != len(self.coefs) or np.any(e < 0):
            raise ModelError("exponents must be a non-negative integer array with one row per coefficient")
        if np.any(e.sum(axis=1) > 3):
            raise ModelError("observables are limited to total degree 3")

    @property
    def S(self) -> int:
        return len(self.exponents[0])

    def arrays(self):
        return np.asarray(self.coefs, dtype=float), np.ascontiguousarray(self.exponents, dtype=np.int64)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c, e = self.arrays()
        return (c[None, :] * np.prod(x[:, None, :] ** e[None, :, :], axis=2)).sum(axis=1)

    @classmethod
    def coordinate(cls, S: int, i: int, power: int = 1) -> Polynomial:
        """x_i ** power with i 1-based."""
        e = [0] * S
        e[i - 1] = power
        return cls((1.0,), (tuple(e),))

    @classmethod
    def product(cls, S: int, i: int, j: int) -> Polynomial:
        e = [0] * S
        e[i - 1] += 1
        e[j - 1] += 1
        return cls((1.0,), (tuple(e),))


def parse_observable(spec: str, S: int) -> Polynomial:
    """'x1', 'x1^2', 'x1*x2' style names."""
    e = [0] * S
    for factor in spec.replace(" ", "").split("*"):
        base, _, pw = factor.partition("^")
        if not base.startswith("x") or not base[1:].isdigit():
            raise ModelError(f"cannot parse observable factor {factor!r}")
        i = int(base[1:])
        if not 1 <= i <= S:
            raise ModelError(f"observable refers to x{i} but S = {S}")
        e[i - 1] += int(pw or 1)
    return Polynomial((1.0,), (tuple(e),))


# ---------------------------------------------------------------- convergence in J

@dataclass
class ConvergenceResult:
    J: list
    errors: list
    std_errors: list
    slope: float
    slope_halfwidth: float
    raw_errors: list = field(default_factory=list)
    flagged: bool = False
    t: float = 1.0
    n_traj: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _fit_slope(J, err) -> tuple[float, float]:
    if len(J) < 3 or np.any(np.asarray(err) <= 0):
        return math.nan, math.nan
    r = stats.linregress(np.log(J), np.log(err))
    return float(r.slope), float(stats.t.ppf(0.975, len(J) - 2) * r.stderr)


def convergence_experiment(env: EnvironmentModel, x0, f: Polynomial, t: float, J_list, n_traj: int,
                           seed: int, env0: int = 0, h_max: float = DEFAULT_H_MAX,
                           threads: int | None = None) -> ConvergenceResult:
    """Error |E f(Moran at t) - E f(PDMP at t)| across population sizes.

    Each Moran replicate is coupled with a PDMP replicate through a shared environment
    path (the exponential holding time of the PDMP and the geometric holding count of
    the chain come from the same uniform). A martingale control variate built from the
    linearised flow along the PDMP path removes most of the O(1/sqrt(J)) fluctuation of
    the difference without changing its mean, so the O(1/J) bias is resolved with a
    moderate ensemble. The PDMP starts from the rounded initial counts of the chain.
    """
    x0 = check_simplex(x0)
    if x0.size != env.S or f.S != env.S:
        raise ModelError("x0 and the observable must match the model dimension")
    if any(J < 50 for J in J_list):
        raise ModelError("every population size must be at least 50")
    coefs, expo = f.arrays()
    fit = np.ascontiguousarray(env.full_fitness())
    Q = np.ascontiguousarray(env.Q)
    errs, ses, raws = [], [], []
    for J in J_list:
        counts = counts_from_x(x0, J)
        if t == 0:
            errs.append(0.0)
            ses.append(0.0)
            raws.append(0.0)
            continue

        def one(i, J=J, counts=counts):
            return K.coupled_replicate(counts, int(env0), fit, Q, int(J), float(t), float(h_max),
                                       coefs, expo, int_seed(trajectory_seed(seed, J, i)))

        out = np.array(map_indexed(one, n_traj, threads))
        d = out[:, 0] - out[:, 1] - out[:, 2]
        errs.append(float(abs(d.mean())))
        ses.append(float(d.std(ddof=1) / math.sqrt(n_traj)))
        raws.append(float(abs((out[:, 0] - out[:, 2]).mean())))
    slope, hw = _fit_slope(J_list, errs)
    flagged = bool(t > 0 and max(ses) > 0.5 * min(errs))
    return ConvergenceResult(list(J_list), errs, ses, slope, hw, raws, flagged, float(t), int(n_traj))


# ---------------------------------------------------------------- ensembles

@dataclass
class EnsembleMean:
    t: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    engine: str

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        S = self.mean.shape[1]
        cols = ["t"] + [f"mean_x_{i + 1}" for i in range(S)] + [f"se_x_{i + 1}" for i in range(S)]
        rows = np.column_stack([self.t, self.mean, self.se])
        np.savetxt(path, rows, delimiter=",", header=",".join(cols), comments="", fmt="%.12g")

    def to_svg(self, path, title: str = "") -> None:
        series = []
        for i in range(self.mean.shape[1]):
            series.append((self.t, self.mean[:, i], f"mean x_{i + 1}"))
            series.append((self.t, self.mean[:, i] + 2 * self.se[:, i], "+2 SE"))
            series.append((self.t, self.mean[:, i] - 2 * self.se[:, i], "-2 SE"))
        line_plot(path, series, title=title, xlabel="t", ylabel="abundance")


def ensemble_mean_path(env: EnvironmentModel, x0, T: float, n_traj: int, seed: int, engine: str = "pdmp",
                       dt: float = 0.1, J: int = 1000, env0: int = 0, h_max: float = DEFAULT_H_MAX,
                       threads: int | None = None) -> EnsembleMean:
    x0 = check_simplex(x0)
    if engine == "pdmp":
        def one(i):
            p = simulate_pdmp(x0, env0, env, T, dt, seed=trajectory_seed(seed, i), h_max=h_max)
            return p.t, p.x
    elif engine == "moran":
        every = max(1, int(round(dt * J)))
        counts = counts_from_x(x0, J)
        n_events = int(round(T * J))
        fit = np.ascontiguousarray(env.full_fitness())
        Q = np.ascontiguousarray(env.Q)

        def one(i):
            ev, c, _ = K.moran_path(counts, int(env0), fit, Q, np.ones(env.K), int(J), n_events, every,
                                    int_seed(trajectory_seed(seed, i)), False)
            return ev / J, c[:, :-1] / J
    else:
        raise ModelError(f"engine must be 'moran' or 'pdmp', got {engine!r}")
    res = map_indexed(one, n_traj, threads)
    t = res[0][0]
    xs = np.stack([r[1] for r in res])
    return EnsembleMean(t, xs.mean(axis=0), xs.std(axis=0, ddof=1) / math.sqrt(n_traj), engine)


@dataclass
class DensityComparison:
    l1: float
    edges: np.ndarray
    empirical: np.ndarray
    analytic: np.ndarray

    def table(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.edges[:-1], self.edges[1:], self.empirical, self.analytic))

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = np.column_stack([self.edges[:-1], self.edges[1:], self.empirical, self.analytic])
        np.savetxt(path, rows, delimiter=",", header="bin_low,bin_high,empirical_mass,analytic_mass",
                   comments="", fmt="%.12g")


def pooled_occupation(env: EnvironmentModel, T: float, bins: int, seed: int, n_traj: int,
                      x0=0.5, dt_sample: float = 0.05, h_max: float = 1e-2, burn_in: float = 0.0,
                      threads: int | None = None):
    """Occupation histogram pooled over independent paths of horizon T each."""
    def one(i):
        p = simulate_pdmp(np.full(env.S, x0 / env.S) if np.isscalar(x0) else x0, 0, env, T, dt_sample,
                          seed=trajectory_seed(seed, i), h_max=h_max)
        return p.x, _sample_weights(p, burn_in)

    res = map_indexed(one, n_traj, threads)
    return histogram_from_samples([r[0] for r in res], [r[1] for r in res], bins, env.S)


def density_comparison(env: EnvironmentModel, T: float = 1e4, bins: int = 100, seed: int = 0,
                       n_traj: int = 32, h_max: float = 1e-2, threads: int | None = None) -> DensityComparison:
    """L1 distance between the pooled occupation histogram and the invariant marginal."""
    dens = invariant_density_2species(env)
    hist = pooled_occupation(env, T, bins, seed, n_traj, h_max=h_max, threads=threads)
    edges = hist.edges[0]
    analytic = dens.bin_masses(edges)
    return DensityComparison(float(np.abs(hist.mass - analytic).sum()), edges, hist.mass, analytic)


# ---------------------------------------------------------------- named experiment descriptions

EXPERIMENT_KINDS = ("convergence", "ensemble", "density", "verdict")


@dataclass
class ExperimentSpec:
    kind: str
    model: str
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        from .models import PRESETS
        if self.kind not in EXPERIMENT_KINDS:
            raise ModelError(f"unknown experiment kind {self.kind!r}")
        if self.model not in PRESETS:
            raise ModelError(f"unknown model {self.model!r}")
        for k, v in self.params.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool) and k in ("T", "n_traj", "bins", "J") and v < 1:
                raise ModelError(f"{k} must be at least 1")


# ---------------------------------------------------------------- acceptance checks and bundle

@dataclass
class Sizes:
    """Ensemble sizes for the checks; `quick` shrinks everything for smoke runs."""

    regime_runs: int = 100
    regime_T: float = 5000.0
    density_T: float = 1e4
    density_paths: int = 32
    mc_T: float = 80.0
    mc_traj: int = 1000
    random_models: int = 10_000
    conv_traj: int = 10_000
    conv_J: tuple = (100, 200, 400, 800, 1600)
    moment_samples: int = 1_000_000
    property_cases: int = 1000
    long_h_max: float = 1e-2

    @classmethod
    def quick(cls) -> Sizes:
        return cls(regime_runs=10, regime_T=500.0, density_T=2000.0, density_paths=4, mc_T=40.0, mc_traj=40,
                   random_models=500, conv_traj=500, conv_J=(100, 200, 400), moment_samples=100_000,
                   property_cases=100)


def _check(number: int, name: str, passed: bool, **metrics) -> dict:
    return {"criterion": number, "name": name, "passed": bool(passed), "metrics": metrics}


INTERIOR_EPS = 1e-6


def regime_runs(env: EnvironmentModel, runs: int, T: float, seed: int, h_max: float = 1e-2,
                threads: int | None = None):
    """Pooled interior occupation and terminal abundance of species 2 over independent runs."""
    def one(i):
        p = simulate_pdmp([0.5], 0, env, T, 0.1, seed=trajectory_seed(seed, i), h_max=h_max)
        occ = ergodic_average(p, lambda x, e: ((x[:, 0] >= INTERIOR_EPS) & (x[:, 0] <= 1 - INTERIOR_EPS)).astype(float), 0.0)
        return occ, p.x_full[-1, 1], p
    return map_indexed(one, runs, threads)


def check_regimes(seed: int, sizes: Sizes, out: Path | None = None) -> dict:
    from .models import two_species
    from .persistence import classify_2species, growth_rates_2species
    t0 = time.time()
    res = {}
    for label, s2 in (("persistent", -0.4), ("extinct", -0.3)):
        env = two_species(1.0, s2)
        runs = regime_runs(env, sizes.regime_runs, sizes.regime_T, seed, sizes.long_h_max)
        res[label] = {
            "regime": classify_2species(*growth_rates_2species(env)).value,
            "interior_occupation": float(np.mean([r[0] for r in runs])),
            "absorbed_runs": int(sum(r[1] < 1e-3 for r in runs)),
        }
        if out is not None:
            runs[0][2].to_csv(out / "paths" / f"two_species_{label}.csv")
            p = runs[0][2]
            line_plot(out / "plots" / f"two_species_{label}.svg", [(p.t, p.x[:, 0], "x")],
                      title=f"two species, s2 = {s2}", xlabel="t", ylabel="x")
    n = sizes.regime_runs
    ok = (res["persistent"]["regime"] == "Persistent" and res["extinct"]["regime"] == "Extinction2"
          and res["persistent"]["interior_occupation"] >= 0.9 and res["extinct"]["absorbed_runs"] >= 0.95 * n)
    return _check(1, "two-species regimes", ok, runtime_s=time.time() - t0, **res)


def check_degenerate() -> dict:
    from .models import two_species
    from .persistence import growth_rates_2species, persistence_verdict
    env = two_species(0.4, -0.4)
    lam0, lam1 = growth_rates_2species(env)
    v = persistence_verdict(env)
    ok = lam0 == 0.0 and abs(lam1 - 2 * 0.4 ** 2 / (1 - 0.4 ** 2)) <= 1e-12 and v.kind != "Persistent"
    return _check(2, "degenerate two-species case", ok, Lambda0=lam0, Lambda1=lam1,
                  reference_Lambda1=2 * 0.4 ** 2 / (1 - 0.4 ** 2), verdict=v.label())


def check_density(seed: int, sizes: Sizes, out: Path | None = None) -> dict:
    from .models import two_species
    from .persistence import fokker_planck_residual
    t0 = time.time()
    env = two_species(1.0, -0.4)
    r1, r2 = fokker_planck_residual(invariant_density_2species(env))
    cmp_ = density_comparison(env, sizes.density_T, 100, seed, sizes.density_paths, sizes.long_h_max)
    if out is not None:
        cmp_.to_csv(out / "paths" / "density_comparison.csv")
        mid = 0.5 * (cmp_.edges[:-1] + cmp_.edges[1:])
        line_plot(out / "plots" / "density_comparison.svg",
                  [(mid, cmp_.empirical, "occupation"), (mid, cmp_.analytic, "invariant law")],
                  title="occupation vs invariant density", xlabel="x", ylabel="bin mass")
    ok = max(r1, r2) < 1e-9 and cmp_.l1 < 0.05
    return _check(3, "invariant density", ok, residual=[r1, r2], l1=cmp_.l1, runtime_s=time.time() - t0)


def check_density_regimes() -> dict:
    from fractions import Fraction as Fr
    from .persistence import endpoint_behaviour, density_exponents, symmetric_rate_thresholds
    e = density_exponents(Fr(1, 4), Fr(-1, 5), Fr(1), Fr(1))
    q0, q1 = symmetric_rate_thresholds(0.27, -0.2)
    regimes = {q: endpoint_behaviour(0.27, -0.2, q, q) for q in (0.5 * q0, 0.5 * (q0 + q1), 2 * q1)}
    want = [("explode", "explode"), ("vanish", "explode"), ("vanish", "vanish")]
    ok = e == (0, 0) and abs(q0 - 0.771) < 1e-3 and abs(q1 - 1.421) < 1e-3 and list(regimes.values()) == want
    return _check(4, "density boundary regimes", ok, crossover_exponents=[str(v) for v in e],
                  thresholds=[q0, q1], regimes={f"{k:.4f}": v for k, v in regimes.items()})


def check_neutral_invasion(seed: int, sizes: Sizes) -> dict:
    from fractions import Fraction as Fr
    from .models import preset
    from .persistence import edge_growth_rates_3species
    env = preset("triple-neutral-invades")
    rates = edge_growth_rates_3species(env)
    exact = (Fr(1, 2) * (Fr(-1, 3) + Fr(1, 4)), Fr(1, 2) * (Fr(1, 3) - Fr(3, 8)))

    def one(i):
        p = simulate_pdmp([1 / 3, 1 / 3], 0, env, sizes.regime_T, 1.0, seed=trajectory_seed(seed, i),
                          h_max=sizes.long_h_max)
        return float(np.hypot(*p.x[-1]))

    norms = np.array(map_indexed(one, sizes.regime_runs))
    hits = int((norms < 1e-3).sum())
    ok = (exact == (Fr(-1, 24), Fr(-1, 48)) and abs(rates.lambda0[0] + 1 / 24) < 1e-12
          and abs(rates.lambda0[1] + 1 / 48) < 1e-12 and hits >= 0.95 * sizes.regime_runs)
    return _check(5, "neutral species invades", ok, Lambda0_1=rates.lambda0[0], Lambda0_2=rates.lambda0[1],
                  runs_near_vertex=hits, runs=sizes.regime_runs)


REFERENCE_EDGE_RATES = {"triple-cyclic": (0.0191, 0.0594, 0.090), "triple-never-best": (0.016, 0.019, 0.009)}


def check_edge_rates(seed: int, sizes: Sizes) -> dict:
    from .models import preset
    from .persistence import MCOptions, persistence_verdict
    t0 = time.time()
    res = {}
    ok = True
    for name, ref in REFERENCE_EDGE_RATES.items():
        v = persistence_verdict(preset(name), MCOptions(T=sizes.mc_T, n_traj=sizes.mc_traj, seed=seed))
        means = [e.get("mean") for e in v.edges if e.get("exists")]
        ses = [e.get("std_error") for e in v.edges if e.get("exists")]
        within = [m is not None and abs(m - p) <= max(0.02, 4 * s) for m, s, p in zip(means, ses, ref)]
        res[name] = {"verdict": v.label(), "mean": means, "std_error": ses, "reference": list(ref),
                     "within_tolerance": within, "certificate": v.certificate}
        ok = ok and v.kind == "Persistent" and len(means) == 3 and all(within)
    return _check(6, "Monte-Carlo edge invasion rates", ok, runtime_s=time.time() - t0, **res)


def random_two_env_models(n: int, seed: int):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        fit = rng.uniform(-0.9, 3.0, size=(2, 2))
        q = rng.uniform(0.1, 5.0, size=2)
        yield EnvironmentModel(fit, [[-q[0], q[0]], [q[1], -q[1]]])


def check_impossibility(seed: int, sizes: Sizes) -> dict:
    from collections import Counter
    from .persistence import persistence_verdict
    t0 = time.time()
    kinds = Counter(persistence_verdict(m).kind for m in random_two_env_models(sizes.random_models, seed))
    return _check(7, "no persistence with two environments", kinds["Persistent"] == 0,
                  verdicts=dict(kinds), runtime_s=time.time() - t0)


def check_convergence(seed: int, sizes: Sizes, out: Path | None = None) -> dict:
    from .models import two_species
    t0 = time.time()
    res = {}
    ok = True
    cases = {
        "constant": (EnvironmentModel([[1.0]], [[0.0]]), [0.3]),
        "switching": (two_species(1.0, -0.4), [0.3]),
    }
    for label, (env, x0) in cases.items():
        r = convergence_experiment(env, x0, Polynomial.coordinate(1, 1), 1.0, list(sizes.conv_J),
                                   sizes.conv_traj, seed)
        res[label] = r.to_dict()
        ok = ok and -1.3 <= r.slope <= -0.7
        if out is not None:
            line_plot(out / "plots" / f"convergence_{label}.svg",
                      [(r.J, r.errors, "|E f(Moran) - E f(PDMP)|"), (r.J, [r.errors[0] * r.J[0] / J for J in r.J], "1/J")],
                      title=f"convergence, {label} environment (slope {r.slope:.3f})", xlabel="J", ylabel="error",
                      logx=True, logy=True)
    return _check(8, "1/J convergence", ok, runtime_s=time.time() - t0, **res)


def check_moments(seed: int, sizes: Sizes) -> dict:
    from .moran import one_step_moments
    Js = [50, 100, 200]
    x, s = [0.3], [1.0]
    ms = [one_step_moments(x, s, J, sizes.moment_samples, trajectory_seed(seed, J)) for J in Js]
    z = [float(abs(m.mean[0] - m.drift[0]) / m.mean_se[0]) for m in ms]
    expo = float(np.polyfit(np.log(Js), np.log([m.var[0] for m in ms]), 1)[0])
    ok = max(z) <= 4 and -2.3 <= expo <= -1.7
    return _check(9, "one-step moments", ok, z_scores=z, variance_exponent=expo)


def check_properties(seed: int, sizes: Sizes) -> dict:
    """Randomised structural checks, one batch of cases per property."""
    from .env import EnvironmentModel as EM
    from .env import drift_field, per_capita_growth
    from .moran import MoranState, moran_step
    from .pdmp import closed_form_flow_1d, flow_step
    from .persistence import (edge_growth_rates_3species, edge_invasion_sign_2env, growth_rates_2species,
                              vertex_invasion_rates)
    rng = np.random.default_rng(seed)
    n = sizes.property_cases
    fails = {"flow_in_simplex": 0, "faces_invariant": 0, "moran_conserves_J": 0, "table_identities": 0,
             "renormalisation": 0, "rk4_vs_closed_form": 0, "trap_region": 0, "lambda_signs": 0,
             "edge_sign_equivalences": 0}
    for _ in range(n):
        x0, s, t = float(rng.uniform(0.01, 0.99)), float(rng.uniform(-0.9, 3.0)), float(rng.uniform(0, 5))
        if abs(flow_step([x0], [s], t)[0] - closed_form_flow_1d(x0, s, t)) > 1e-8:
            fails["rk4_vs_closed_form"] += 1
        # on x^1 = b (1 - x^2) the field has <G, (1, b)> (1 + A) = b s^1 (1 - x^1 - x^2) <= 0 when s^1 < 0
        b = float(rng.uniform(0.05, 0.95))
        sv = np.array([rng.uniform(-0.9, -0.01), rng.uniform(-0.9, 3.0)])
        y = float(rng.uniform(0, 1))
        x = np.array([b * (1 - y), y])
        lhs = float(drift_field(x, sv) @ np.array([1.0, b]))
        if abs(lhs * (1 + sv @ x) - b * sv[0] * (1 - x.sum())) > 1e-12 or lhs > 1e-15:
            fails["trap_region"] += 1
    for _ in range(n):
        S = int(rng.integers(1, 4))
        s = rng.uniform(-0.9, 3.0, S)
        x = rng.dirichlet(np.ones(S + 1))[:-1]
        if rng.random() < 0.3:
            x[rng.integers(S)] = 0.0
        y = flow_step(x, s, float(rng.uniform(0, 5)))
        if np.any(y < 0) or y.sum() > 1 + 1e-12:
            fails["flow_in_simplex"] += 1
        if np.any((x == 0) != (y == 0)):
            fails["faces_invariant"] += 1
        # renormalising by another reference species leaves the field unchanged
        full = np.append(s, 0.0)
        r = int(rng.integers(S))
        rel = (full - full[r]) / (1 + full[r])
        xf = np.append(x, 1 - x.sum())
        perm = [k for k in range(S + 1) if k != r] + [r]
        G = xf * per_capita_growth(x, s)
        G2 = xf[perm][:-1] * per_capita_growth(xf[perm][:-1], rel[perm][:-1])[:-1]
        if not np.allclose(G[perm][:-1], G2, atol=1e-12):
            fails["renormalisation"] += 1
    for _ in range(n):
        J = int(rng.integers(2, 50))
        S = int(rng.integers(1, 4))
        counts = rng.multinomial(J, np.ones(S + 1) / (S + 1))
        K_ = int(rng.integers(1, 4))
        Q = rng.uniform(0.1, 2, (K_, K_)) if K_ > 1 else np.zeros((1, 1))
        np.fill_diagonal(Q, 0)
        np.fill_diagonal(Q, -Q.sum(axis=1))
        env = EM(rng.uniform(-0.9, 3, (K_, S)), Q)
        st = MoranState(tuple(int(c) for c in counts), int(rng.integers(K_)))
        st2 = moran_step(st, env, J, rng, alpha=np.full(K_, 1.0 / env.rates.max()) if K_ > 1 else None)
        if sum(st2.counts) != J or min(st2.counts) < 0:
            fails["moran_conserves_J"] += 1
    for _ in range(n):
        K_ = int(rng.integers(2, 4))
        Q = rng.uniform(0.1, 2, (K_, K_))
        np.fill_diagonal(Q, 0)
        np.fill_diagonal(Q, -Q.sum(axis=1))
        env = EM(rng.uniform(-0.9, 3, (K_, 2)), Q)
        M = vertex_invasion_rates(env)
        e = edge_growth_rates_3species(env)
        table = np.array([[0, e.lambda1[2], e.lambda0[1]], [e.lambda0[2], 0, e.lambda0[0]],
                          [e.lambda1[1], e.lambda1[0], 0]])
        if not np.allclose(M, table, atol=1e-12):
            fails["table_identities"] += 1
    for _ in range(n):
        q = rng.uniform(0.1, 5.0, 2)
        Q = [[-q[0], q[0]], [q[1], -q[1]]]
        lam0, lam1 = growth_rates_2species(EM(rng.uniform(-0.9, 3, (2, 1)), Q))
        if (lam0 < 0 and lam1 <= 0) or (lam1 < 0 and lam0 <= 0):
            fails["lambda_signs"] += 1
        try:
            sg = edge_invasion_sign_2env(EM(rng.uniform(-0.9, 3, (2, 2)), Q))
        except ModelError:
            continue
        cfg = sg.configuration
        (s1, s2), (r1, r2) = cfg.s, cfg.r
        got = tuple(sg.signs[cfg.species[k]] for k in range(3))
        d = s1 * r2 - s2 * r1
        if abs(d) > 1e-9 and got != ((-1, -1, 1) if d < 0 else (1, 1, -1)):
            fails["edge_sign_equivalences"] += 1
    return _check(10, "structural properties", not any(fails.values()), cases_per_property=n, failures=fails)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def reproduce_examples(seed: int, out_dir, sizes: Sizes | None = None) -> dict:
    """Run every worked example and acceptance check, writing report.json, paths/ and plots/."""
    from .models import preset
    from .persistence import MCOptions, persistence_verdict
    sizes = sizes or Sizes()
    out = Path(out_dir)
    (out / "paths").mkdir(parents=True, exist_ok=True)
    (out / "plots").mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    checks = [
        check_regimes(seed, sizes, out),
        check_degenerate(),
        check_density(seed, sizes, out),
        check_density_regimes(),
        check_neutral_invasion(seed, sizes),
        check_edge_rates(seed, sizes),
        check_impossibility(seed, sizes),
        check_convergence(seed, sizes, out),
        check_moments(seed, sizes),
        check_properties(seed, sizes),
    ]
    verdicts = {}
    for name in ("pair-persistent", "pair-extinct", "pair-neutral", "triple-dominated", "triple-neutral-invades"):
        verdicts[name] = persistence_verdict(preset(name), MCOptions(seed=seed)).to_report()
    for name in ("pair-persistent", "pair-extinct", "pair-neutral"):
        m = ensemble_mean_path(preset(name), [0.5], 50.0, 100, seed, "pdmp", dt=0.1)
        m.to_csv(out / "paths" / f"ensemble_{name}.csv")
        m.to_svg(out / "plots" / f"ensemble_{name}.svg", title=f"ensemble mean, {name}")
    report = {
        "seed": seed,
        "sizes": asdict(sizes),
        "checks": checks,
        "verdicts": verdicts,
        "all_passed": all(c["passed"] for c in checks),
        "runtime_s": time.time() - t0,
    }
    report = _jsonable(report)
    # wall-clock fields are the only non-deterministic content; keep them out of the comparison key
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return report
