"""Acceptance criteria at full ensemble sizes, one PASS/FAIL line per criterion.

Thresholds are written out here rather than read from the library so that the
checks cannot drift with the implementation.
"""
from __future__ import annotations

import time
from fractions import Fraction as Fr

import pytest

from moran_pdmp import experiments as X
from moran_pdmp.models import two_species
from moran_pdmp.persistence import Regime, classify_2species, growth_rates_2species, persistence_verdict

SEED = 0
SIZES = X.Sizes()

pytestmark = pytest.mark.slow


def _report(capsys, number: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}")
    assert ok, detail


def test_criterion_01_regimes(capsys):
    t0 = time.time()
    m = X.check_regimes(SEED, SIZES)["metrics"]
    cls = lambda s2: classify_2species(*growth_rates_2species(two_species(1.0, s2)))
    boundary = abs(growth_rates_2species(two_species(1.0, -1 / 3))[1]) < 1e-15
    occ, absorbed = m["persistent"]["interior_occupation"], m["extinct"]["absorbed_runs"]
    dt = time.time() - t0
    ok = (boundary and cls(-0.4) == Regime.PERSISTENT and cls(-0.3) == Regime.EXTINCTION_2
          and occ >= 0.9 and absorbed >= 95 and dt < 120)
    _report(capsys, 1, ok, f"interior occupation {occ:.3f} (>= 0.9), absorbed {absorbed}/100 (>= 95), {dt:.0f} s")


def test_criterion_02_degenerate(capsys):
    lam0, lam1 = growth_rates_2species(two_species(0.4, -0.4))
    v = persistence_verdict(two_species(0.4, -0.4))
    reference = 0.38095
    ok = lam0 == 0.0 and abs(lam1 - 2 * 0.4 ** 2 / (1 - 0.4 ** 2)) <= 1e-12 and v.kind != "Persistent"
    _report(capsys, 2, ok, f"Lambda0 = {lam0}, Lambda1 = {lam1:.6f} vs reference {reference} (tol 1e-12), "
                           f"verdict {v.label()}")


def test_criterion_03_density(capsys):
    t0 = time.time()
    m = X.check_density(SEED, SIZES)["metrics"]
    dt = time.time() - t0
    ok = max(m["residual"]) < 1e-9 and m["l1"] < 0.05 and dt < 180
    _report(capsys, 3, ok, f"FP residual {max(m['residual']):.1e} (< 1e-9), L1 {m['l1']:.4f} (< 0.05), {dt:.0f} s")


def test_criterion_04_density_regimes(capsys):
    m = X.check_density_regimes()["metrics"]
    q0, q1 = m["thresholds"]
    regimes = list(m["regimes"].values())
    ok = (m["crossover_exponents"] == ["0", "0"] and abs(q0 - 0.771) < 1e-3 and abs(q1 - 1.421) < 1e-3
          and regimes == [("explode", "explode"), ("vanish", "explode"), ("vanish", "vanish")])
    _report(capsys, 4, ok, f"crossover exponents {m['crossover_exponents']}, thresholds {q0:.4f} / {q1:.4f}")


def test_criterion_05_neutral_invasion(capsys):
    m = X.check_neutral_invasion(SEED, SIZES)["metrics"]
    exact = Fr(1, 2) * (Fr(-1, 3) + Fr(1, 4)), Fr(1, 2) * (Fr(1, 3) - Fr(3, 8))
    ok = (exact == (Fr(-1, 24), Fr(-1, 48)) and abs(m["Lambda0_1"] + 1 / 24) < 1e-15
          and abs(m["Lambda0_2"] + 1 / 48) < 1e-15 and m["runs_near_vertex"] >= 95)
    _report(capsys, 5, ok, f"Lambda0 = {m['Lambda0_1']:.6f}, {m['Lambda0_2']:.6f}; "
                           f"{m['runs_near_vertex']}/100 runs with norm < 1e-3 (>= 95)")


def test_criterion_06_edge_rates(capsys):
    t0 = time.time()
    m = X.check_edge_rates(SEED, SIZES)["metrics"]
    dt = time.time() - t0
    reference = {"triple-cyclic": (0.0191, 0.0594, 0.090), "triple-never-best": (0.016, 0.019, 0.009)}
    ok, parts = dt < 600, []
    for name, want in reference.items():
        r = m[name]
        within = [abs(a - b) <= max(0.02, 4 * s) for a, b, s in zip(r["mean"], want, r["std_error"])]
        positive = all(a > 0 for a in r["mean"])
        ok = ok and len(r["mean"]) == 3 and all(within) and positive and r["verdict"] == "Persistent" \
            and r["certificate"] is not None
        parts.append(f"{name} " + "/".join(f"{a:.4f}" for a in r["mean"]) + f" vs {want} {r['verdict']}")
    _report(capsys, 6, ok, "; ".join(parts) + f", {dt:.0f} s")


def test_criterion_07_impossibility(capsys):
    t0 = time.time()
    kinds = {}
    for env in X.random_two_env_models(10_000, SEED):
        k = persistence_verdict(env).kind
        kinds[k] = kinds.get(k, 0) + 1
    dt = time.time() - t0
    ok = kinds.get("Persistent", 0) == 0 and sum(kinds.values()) == 10_000 and dt < 60
    _report(capsys, 7, ok, f"verdicts over 10^4 models {kinds}, {dt:.0f} s")


def test_criterion_08_convergence(capsys):
    t0 = time.time()
    m = X.check_convergence(SEED, SIZES)["metrics"]
    dt = time.time() - t0
    slopes = {k: m[k]["slope"] for k in ("constant", "switching")}
    ok = (all(-1.3 <= v <= -0.7 for v in slopes.values()) and dt < 600
          and all(m[k]["J"] == [100, 200, 400, 800, 1600] and m[k]["n_traj"] == 10_000 for k in slopes))
    _report(capsys, 8, ok, ", ".join(f"{k} slope {v:.3f}" for k, v in slopes.items()) + f" in [-1.3, -0.7], {dt:.0f} s")


def test_criterion_09_moments(capsys):
    m = X.check_moments(SEED, SIZES)["metrics"]
    ok = max(m["z_scores"]) <= 4 and -2.3 <= m["variance_exponent"] <= -1.7
    _report(capsys, 9, ok, f"max |z| {max(m['z_scores']):.2f} (<= 4), variance exponent "
                           f"{m['variance_exponent']:.3f} in [-2.3, -1.7]")


def test_criterion_10_properties(capsys):
    m = X.check_properties(SEED, SIZES)["metrics"]
    ok = m["cases_per_property"] >= 1000 and not any(m["failures"].values()) and len(m["failures"]) == 9
    _report(capsys, 10, ok, f"{m['cases_per_property']} cases per property, failures {m['failures']}")
