from __future__ import annotations

import itertools
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.optimize import linprog
from scipy.special import beta as beta_fn, betainc

from moran_pdmp.env import EnvironmentModel
from moran_pdmp.errors import ModelError
from moran_pdmp.lp import max_min_weights
from moran_pdmp.models import preset, two_species, uniform_generator
from moran_pdmp.persistence import (MCOptions, Regime, classify_2species, density_exponents, edge_ergodic_exists,
                                    edge_growth_rates_3species, edge_invasion_rate_mc, edge_invasion_sign_2env,
                                    endpoint_behaviour, fokker_planck_residual, full_support_determinant,
                                    growth_rates_2species, invariant_density_2species, lambda_vertex,
                                    normalize_configuration, persistence_verdict, symmetric_rate_thresholds,
                                    vertex_invasion_rates)

from strategies import generators, models, rate


# ---------------------------------------------------------------- two species

def test_growth_rates_persistent_example():
    lam0, lam1 = growth_rates_2species(two_species(1.0, -0.4))
    assert lam0 == pytest.approx(0.3, abs=1e-15) and lam1 == pytest.approx(1 / 12, abs=1e-15)
    assert classify_2species(lam0, lam1) == Regime.PERSISTENT


def test_persistence_boundary_at_minus_one_third():
    assert classify_2species(*growth_rates_2species(two_species(1.0, -0.34))) == Regime.PERSISTENT
    assert classify_2species(*growth_rates_2species(two_species(1.0, -0.33))) == Regime.EXTINCTION_2
    assert abs(growth_rates_2species(two_species(1.0, -1 / 3))[1]) < 1e-15


def test_neutral_example_definition_value():
    lam0, lam1 = growth_rates_2species(two_species(0.4, -0.4))
    assert lam0 == 0.0
    # -(s/(1+s) - s/(1-s)) / 2 = s^2 / (1 - s^2)
    assert lam1 == pytest.approx(0.16 / 0.84, abs=1e-15)
    assert classify_2species(lam0, lam1) == Regime.DEGENERATE


@pytest.mark.parametrize("pair,regime", [((0.3, 0.0833), Regime.PERSISTENT), ((0.0, 0.381), Regime.DEGENERATE),
                                         ((-0.05, 0.2), Regime.EXTINCTION_1), ((0.2, -0.01), Regime.EXTINCTION_2)])
def test_classify(pair, regime):
    assert classify_2species(*pair) == regime


@given(models(1))
def test_negative_lambda0_forces_positive_lambda1(env):
    lam0, lam1 = growth_rates_2species(env)
    if lam0 < 0:
        assert lam1 > 0
    if lam1 < 0:
        assert lam0 > 0


def test_growth_rates_match_long_run_time_averages():
    from moran_pdmp.pdmp import ergodic_average, simulate_pdmp
    env = two_species(1.0, -0.4, 0.7, 0.3)
    p = simulate_pdmp([0.5], 0, env, 20000.0, 1.0, seed=0, h_max=1e-1)
    s = env.fitness[:, 0]
    lam0, lam1 = growth_rates_2species(env)
    assert ergodic_average(p, lambda x, e: s[e], 0.0) == pytest.approx(lam0, abs=0.02)
    assert ergodic_average(p, lambda x, e: -s[e] / (1 + s[e]), 0.0) == pytest.approx(lam1, abs=0.02)


# ---------------------------------------------------------------- density

def test_density_matches_beta_closed_form():
    env = two_species(1.0, -0.4)
    d = invariant_density_2species(env)
    assert (d.a, d.b) == pytest.approx((0.75, 0.25), abs=1e-14)
    # h1 + h2 = C (1/|s1| + 1/|s2|) x^(a-1) (1-x)^(b-1) when the signs differ
    assert d.C * (1 + 1 / 0.4) == pytest.approx(1 / beta_fn(0.75, 0.25), rel=1e-10)
    edges = np.linspace(0, 1, 11)
    assert np.allclose(d.bin_masses(edges), np.diff(betainc(0.75, 0.25, edges)), atol=1e-10)
    assert d.bin_masses([0.0, 1.0])[0] == pytest.approx(1.0, abs=1e-10)


@given(st.floats(0.05, 2.0), st.floats(-0.9, -0.05), rate, rate)
def test_density_normalised_and_solves_fokker_planck(s1, s2, q1, q2):
    env = two_species(s1, s2, q1, q2)
    assume(classify_2species(*growth_rates_2species(env)) == Regime.PERSISTENT)
    d = invariant_density_2species(env)
    assume(d.a > 0.05 and d.b > 0.05)
    a, b = d.a, d.b
    assert d.C * (1 / s1 + 1 / abs(s2)) == pytest.approx(1 / beta_fn(a, b), rel=1e-8)
    grid = np.linspace(0.05, 0.95, 201)
    scale = max(1.0, float(np.max(d.h(0, grid) + d.h(1, grid))))
    assert max(fokker_planck_residual(d, grid)) < 1e-9 * scale


def test_fokker_planck_rejects_perturbed_density():
    d = invariant_density_2species(two_species(1.0, -0.4))
    assert max(fokker_planck_residual(d)) < 1e-9
    funcs = (lambda x: d.h(0, x) * 1.01, lambda x: d.dh(0, x) * 1.01, lambda x: d.h(1, x), lambda x: d.dh(1, x))
    assert max(fokker_planck_residual(d, funcs=funcs)) > 1e-3


def test_density_needs_persistence():
    with pytest.raises(ModelError):
        invariant_density_2species(two_species(1.0, -0.3))
    with pytest.raises(ModelError):
        invariant_density_2species(two_species(0.4, -0.4))


def test_density_exponents_rational_crossover():
    assert density_exponents(Fr(1, 4), Fr(-1, 5), Fr(1), Fr(1)) == (0, 0)
    e0, e1 = density_exponents(0.21, -0.2, 1.0, 1.0)
    assert e0 == pytest.approx(-0.762, abs=1e-3) and e1 == pytest.approx(0.762, abs=1e-3)
    assert endpoint_behaviour(0.21, -0.2, 1.0, 1.0) == ("explode", "vanish")


def test_density_rate_thresholds():
    q0, q1 = symmetric_rate_thresholds(0.27, -0.2)
    assert q0 == pytest.approx(0.054 / 0.07, rel=1e-12) and q1 == pytest.approx(0.054 / 0.038, rel=1e-12)
    assert endpoint_behaviour(0.27, -0.2, 0.5, 0.5) == ("explode", "explode")
    assert endpoint_behaviour(0.27, -0.2, 1.0, 1.0) == ("vanish", "explode")
    assert endpoint_behaviour(0.27, -0.2, 2.0, 2.0) == ("vanish", "vanish")
    d = invariant_density_2species(two_species(0.27, -0.2, 1.0, 1.0))
    assert (d.a - 1, d.b - 1) == pytest.approx(density_exponents(0.27, -0.2, 1.0, 1.0), abs=1e-12)


# ---------------------------------------------------------------- three species, analytic

def test_cyclic_example_rates():
    env = preset("triple-cyclic")
    r = edge_growth_rates_3species(env)
    assert np.allclose(r.lambda0, [1 / 9, 5 / 36, 5 / 36], atol=1e-15)
    assert np.allclose(r.lambda1, [5 / 36, 1 / 9, 1 / 9], atol=1e-15)
    assert all(edge_ergodic_exists(r, i) for i in (1, 2, 3))
    M = vertex_invasion_rates(env)
    assert np.all(np.diag(M) == 0) and np.all(M + np.eye(3) > 0)


def test_neutral_invasion_example_rates():
    env = preset("triple-neutral-invades")
    r = edge_growth_rates_3species(env)
    assert r.lambda0[0] == pytest.approx(-1 / 24, abs=1e-15)
    assert r.lambda0[1] == pytest.approx(-1 / 48, abs=1e-15)
    assert r.lambda0[2] == pytest.approx(1 / 4, abs=1e-15)
    M = vertex_invasion_rates(env)
    assert M[2, 0] > 0 and M[2, 1] > 0
    assert lambda_vertex(env, 3) == pytest.approx(max(-1 / 24, -1 / 48), abs=1e-15)
    signs = edge_invasion_sign_2env(env).signs
    assert Fr(1, 3) * Fr(1, 4) < Fr(-3, 8) * Fr(-1, 3)
    assert signs == {1: -1, 2: -1, 3: 1}


@given(models(2, K=3))
def test_table_identities(env):
    M = vertex_invasion_rates(env)
    e = edge_growth_rates_3species(env)
    table = np.array([[0, e.lambda1[2], e.lambda0[1]],
                      [e.lambda0[2], 0, e.lambda0[0]],
                      [e.lambda1[1], e.lambda1[0], 0]])
    assert np.allclose(M, table, atol=1e-12)


@given(models(2))
def test_at_most_one_attracting_vertex(env):
    assert sum(lambda_vertex(env, i) < -1e-12 for i in (1, 2, 3)) <= 1


@given(models(2))
def test_always_best_species_has_negative_lambda(env):
    full = env.full_fitness()
    for i in range(3):
        if np.all(full[:, [i]] > np.delete(full, i, axis=1)):
            lam = max(env.p @ ((full[:, k] - full[:, i]) / (1 + full[:, i])) for k in range(3) if k != i)
            assert lambda_vertex(env, i + 1) == pytest.approx(lam, abs=1e-15) and lam < 0


# ---------------------------------------------------------------- configuration and edge signs

@st.composite
def two_env_models(draw):
    return draw(models(2, K=2))


@given(two_env_models())
def test_edge_sign_equivalences(env):
    try:
        sg = edge_invasion_sign_2env(env)
    except ModelError:
        return
    cfg = sg.configuration
    (s1, s2), (r1, r2) = cfg.s, cfg.r
    a, b, c = (sg.signs[cfg.species[k]] for k in range(3))
    if s1 * r2 < s2 * r1 - 1e-9:
        assert (a, b, c) == (-1, -1, 1)
    elif s1 * r2 > s2 * r1 + 1e-9:
        assert (a, b, c) == (1, 1, -1)


def test_edge_sign_symmetric_boundary():
    # s1 r2 = s2 r1 after normalisation
    env = EnvironmentModel([[0.5, -0.2], [-0.5, 0.2]], uniform_generator(2))
    sg = edge_invasion_sign_2env(env)
    assert set(sg.signs.values()) == {0}
    v = persistence_verdict(env)
    assert v.kind == "Degenerate"


def test_unsupported_configuration():
    with pytest.raises(ModelError, match="unsupported configuration"):
        normalize_configuration(EnvironmentModel([[0.5, 0.2], [0.4, 0.1]], uniform_generator(2)))


@given(two_env_models())
def test_normalisation_reproduces_relative_fitness(env):
    try:
        cfg = normalize_configuration(env)
    except ModelError:
        return
    full = env.full_fitness()
    a, b, c = (k - 1 for k in cfg.species)
    for j, e in enumerate(cfg.envs):
        assert cfg.s[j] == pytest.approx((full[e, a] - full[e, c]) / (1 + full[e, c]))
        assert cfg.r[j] == pytest.approx((full[e, b] - full[e, c]) / (1 + full[e, c]))


@pytest.mark.parametrize("fit", [[[-0.75, 1.34], [1.06, -0.86]], [[-0.63, 0.08], [1.02, -0.85]]])
def test_monte_carlo_signs_agree_with_closed_form(fit):
    env = EnvironmentModel(fit, uniform_generator(2))
    signs = edge_invasion_sign_2env(env).signs
    r = edge_growth_rates_3species(env)
    present = [i for i in (1, 2, 3) if r.exists(i)]
    assert len(present) >= 2
    for i in present:
        est = edge_invasion_rate_mc(env, i, MCOptions(T=60.0, n_traj=60, seed=11))
        assert abs(est.mean) > 4 * est.std_error
        assert np.sign(est.mean) == signs[i]


def test_mc_rejects_missing_edge():
    with pytest.raises(ModelError, match="no ergodic measure"):
        edge_invasion_rate_mc(preset("triple-neutral-invades"), 1, MCOptions(T=10, n_traj=4))


def test_mc_is_deterministic():
    env = preset("triple-cyclic")
    a = edge_invasion_rate_mc(env, 2, MCOptions(T=20, n_traj=8, seed=3))
    b = edge_invasion_rate_mc(env, 2, MCOptions(T=20, n_traj=8, seed=3, threads=2))
    assert a.mean == b.mean and a.std_error == b.std_error


def test_full_support_determinant():
    env = preset("triple-cyclic")
    (s1, s2, s3), (r1, r2, r3) = env.fitness[:, 0], env.fitness[:, 1]
    det = np.linalg.det(np.array([[1, 1, 1], [s1, s2, s3], [r1, r2, r3]]))
    assert full_support_determinant(env) == pytest.approx(det, abs=1e-14)
    assert full_support_determinant(preset("triple-never-best")) != 0


# ---------------------------------------------------------------- LP and verdicts

@given(st.integers(1, 6).flatmap(lambda m: st.lists(st.lists(st.floats(-1, 1), min_size=3, max_size=3),
                                                     min_size=m, max_size=m)))
def test_max_min_matches_linprog(rows):
    L = np.array(rows)
    sol = max_min_weights(L)
    # variables (c1, c2, c3, t): maximise t
    res = linprog([0, 0, 0, -1], A_ub=np.hstack([-L, np.ones((L.shape[0], 1))]), b_ub=np.zeros(L.shape[0]),
                  A_eq=[[1, 1, 1, 0]], b_eq=[1], bounds=[(0, None)] * 3 + [(None, None)], method="highs")
    assert sol.value == pytest.approx(-res.fun, abs=1e-9)
    assert np.all(sol.c >= 0) and sol.c.sum() == pytest.approx(1.0)
    assert np.min(L @ sol.c) >= sol.value - 1e-9


def test_verdict_examples_two_species():
    assert persistence_verdict(two_species(1.0, -0.4)).kind == "Persistent"
    v = persistence_verdict(two_species(1.0, -0.3))
    assert v.label() == "ExtinctionOf(2)" and v.sure
    assert persistence_verdict(two_species(-0.2, -0.5)).label() == "ExtinctionOf(1)"
    assert persistence_verdict(two_species(0.4, -0.4)).kind == "Degenerate"


def test_verdict_examples_three_species():
    assert persistence_verdict(preset("triple-dominated")).label() == "ExtinctionOf(2)"
    v = persistence_verdict(preset("triple-neutral-invades"))
    assert v.label() == "InvasionPossibleBy(3)" and v.sure
    best = EnvironmentModel([[0.5, 0.2], [0.1, -0.3]], uniform_generator(2))
    v = persistence_verdict(best)
    assert v.label() == "InvasionPossibleBy(1)" and v.sure and v.certificate["rate"] < 0


def test_verdict_rejects_four_species():
    with pytest.raises(ModelError):
        persistence_verdict(EnvironmentModel([[0.1, 0.2, 0.3]], [[0.0]]))


@given(two_env_models())
def test_two_environments_never_persistent(env):
    v = persistence_verdict(env)
    assert v.kind != "Persistent"


@given(models(1))
def test_persistent_certificates_are_valid_two_species(env):
    v = persistence_verdict(env)
    if v.kind == "Persistent":
        c = np.array(v.certificate["c"])
        lam0, lam1 = growth_rates_2species(env)
        assert np.all(c >= 1) and min(c[0] * lam0, c[1] * lam1) > 0
        assert v.certificate["margin"] > 0


def test_persistent_certificate_three_environments():
    v = persistence_verdict(preset("triple-never-best"), MCOptions(T=80, n_traj=100, seed=1))
    assert v.kind == "Persistent"
    c = np.array(v.certificate["c"])
    M = vertex_invasion_rates(preset("triple-never-best"))
    assert np.all(c >= 1) and np.all(M.T @ c > 0)
    assert all(e["mean"] > 2 * e["std_error"] for e in v.edges if e["exists"])
    assert set(v.to_report()) >= {"lambdas", "edges", "verdict", "certificate", "permutation"}
