from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from moran_pdmp.env import EnvironmentModel
from moran_pdmp.errors import IntegrationError, ModelError
from moran_pdmp.models import two_species, uniform_generator
from moran_pdmp.pdmp import (closed_form_flow_1d, ergodic_average, flow_step, occupation_histogram,
                             sample_env_path, sample_switch, simulate_pdmp)

from strategies import fitness_value, simplex_points


def test_closed_form_satisfies_implicit_relation():
    x0, s, t = 0.2, 0.8, 3.0
    x = closed_form_flow_1d(x0, s, t)
    lhs = math.log(x) - (1 + s) * math.log(1 - x)
    rhs = math.log(x0) - (1 + s) * math.log(1 - x0) + s * t
    assert abs(lhs - rhs) < 1e-12


def test_closed_form_increases_to_one_for_positive_s():
    xs = [closed_form_flow_1d(0.1, 0.5, t) for t in (0, 1, 5, 20, 80)]
    assert all(b > a for a, b in zip(xs, xs[1:])) and xs[-1] > 0.999


@given(st.floats(1e-3, 1 - 1e-3), st.floats(-0.9, 3.0), st.floats(0.0, 10.0))
def test_rk4_matches_closed_form(x0, s, t):
    assert flow_step([x0], [s], t)[0] == pytest.approx(closed_form_flow_1d(x0, s, t), abs=1e-9)


@given(st.integers(1, 3).flatmap(lambda S: st.tuples(simplex_points(S), st.lists(fitness_value, min_size=S, max_size=S))),
       st.floats(0.0, 20.0))
def test_flow_keeps_simplex_and_faces(xs, t):
    # abundances are kept inside the normal double range; below ~1e-308 they underflow to 0
    x, s = xs
    x = np.where(x < 1e-300, 0.0, x)
    y = flow_step(x, s, t)
    assert np.all(y >= 0) and y.sum() <= 1 + 1e-12
    assert np.array_equal(x == 0, y == 0)
    if x.sum() == 1.0:
        assert 1 - y.sum() <= 1e-12


def test_vertices_are_fixed():
    for v in ([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]):
        assert np.array_equal(flow_step(v, [0.5, -0.3], 7.0), v)


def test_flow_resolves_abundances_far_below_roundoff():
    # the last species keeps shrinking geometrically instead of freezing at 1 - x == 0
    env = EnvironmentModel([[1.0]], [[0.0]])
    p = simulate_pdmp([0.5], 0, env, 200.0, 1.0, seed=0)
    tail = np.log(p.x_full[20:, 1])
    assert np.all(np.diff(tail) < 0)
    # F^2 at the vertex is -1/2
    assert np.diff(tail)[-50:] == pytest.approx(-0.5, abs=1e-6)
    assert p.x_full[-1, 1] < 1e-40


def test_flow_rejects_bad_input():
    with pytest.raises(IntegrationError):
        flow_step([0.3], [0.5], -1.0)
    with pytest.raises(ModelError):
        flow_step([0.7, 0.6], [0.5, 0.1], 1.0)


def test_sample_switch_absorbing_and_frequencies():
    rng = np.random.default_rng(0)
    assert sample_switch(0, [[0.0]], rng) == (math.inf, 0)
    Q = np.array([[-3.0, 1.0, 2.0], [1, -1, 0], [1, 0, -1]])
    draws = [sample_switch(0, Q, rng) for _ in range(20000)]
    holds = np.array([d[0] for d in draws])
    nxt = np.array([d[1] for d in draws])
    assert holds.mean() == pytest.approx(1 / 3, rel=0.03)
    assert (nxt == 2).mean() == pytest.approx(2 / 3, abs=0.015)
    assert not np.any(nxt == 0)


def test_env_path_time_fractions_match_stationary_law():
    rng = np.random.default_rng(1)
    Q = np.array([[-0.3, 0.3], [1.2, -1.2]])
    T = 20000.0
    times, states = sample_env_path(Q, 0, T, rng)
    edges = np.concatenate([[0.0], times, [T]])
    envs = np.concatenate([[0], states])
    occ = np.bincount(envs, weights=np.diff(edges), minlength=2) / T
    assert occ[0] == pytest.approx(0.8, abs=0.01)


def test_path_structure_and_determinism():
    env = two_species(1.0, -0.4)
    a = simulate_pdmp([0.5], 0, env, 30.0, 0.1, seed=4)
    b = simulate_pdmp([0.5], 0, env, 30.0, 0.1, seed=4)
    assert np.array_equal(a.x_full, b.x_full) and np.array_equal(a.jump_times, b.jump_times)
    assert a.t[0] == 0 and a.t[-1] == 30.0 and np.all(np.diff(a.t) > 0)
    bp = a.breakpoints()
    assert bp[0][0] == 0.0 and len(bp) == a.jump_times.size + 1
    assert np.all(np.diff([t for t, _, _ in bp]) > 0)
    # env between switches is constant in the dense samples
    for t0, _, e in bp:
        k = np.searchsorted(a.t, t0, side="right")
        if k < a.t.size:
            assert a.env[k] == e


def test_breakpoint_state_matches_dense_flow():
    env = two_species(1.0, -0.4)
    p = simulate_pdmp([0.5], 0, env, 20.0, 0.5, seed=2)
    # integrate piecewise from breakpoints with the closed form and compare at T
    x = 0.5
    bps = p.breakpoints() + [(p.T, None, None)]
    for (t0, _, e), (t1, _, _) in zip(bps, bps[1:]):
        x = closed_form_flow_1d(x, env.fitness[e, 0], t1 - t0)
    assert p.x[-1, 0] == pytest.approx(x, abs=1e-9)


def test_ergodic_average_constant_and_env_fraction():
    env = two_species(1.0, -0.4, 0.3, 1.2)
    p = simulate_pdmp([0.5], 0, env, 4000.0, 0.5, seed=3, h_max=1e-2)
    assert ergodic_average(p, lambda x, e: np.full(len(e), 2.5)) == pytest.approx(2.5, abs=1e-12)
    frac = ergodic_average(p, lambda x, e: (e == 0).astype(float), burn_in=0.0)
    assert frac == pytest.approx(0.8, abs=0.03)


def test_ergodic_average_is_exact_for_piecewise_constant_env_observable():
    env = two_species(1.0, -0.4)
    p = simulate_pdmp([0.5], 0, env, 50.0, 0.37, seed=8)
    edges = np.concatenate([[0.0], p.jump_times, [p.T]])
    envs = np.concatenate([[p.env0], p.jump_states])
    exact = np.sum(np.diff(edges) * (envs == 1)) / p.T
    assert ergodic_average(p, lambda x, e: (e == 1).astype(float), burn_in=0.0) == pytest.approx(exact, abs=1e-12)


def test_occupation_histogram_and_csv(tmp_path):
    env = EnvironmentModel([[1.0, 0.5], [-0.25, -0.5], [-1 / 3, 1 / 3]], uniform_generator(3))
    p = simulate_pdmp([0.3, 0.3], 0, env, 50.0, 0.1, seed=1)
    h = occupation_histogram(p, bins=10)
    assert h.mass.shape == (10, 10) and h.mass.sum() == pytest.approx(1.0)
    p.to_csv(tmp_path / "p.csv")
    h.to_csv(tmp_path / "h.csv")
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["t", "x_1", "x_2", "env_index"] and len(rows) == p.t.size + 1
    hrows = list(csv.reader(open(tmp_path / "h.csv")))
    assert hrows[0] == ["bin_low_1", "bin_high_1", "bin_low_2", "bin_high_2", "mass"]


@pytest.mark.parametrize("s,m", [([0.5, -0.2], 1), ([-0.3, -0.6], 3), ([0.2, 0.9], 2)])
def test_constant_environment_converges_at_linearised_rate(s, m):
    env = EnvironmentModel([s], [[0.0]])
    p = simulate_pdmp([0.3, 0.3], 0, env, 400.0, 0.5, seed=0)
    full = np.append(s, 0.0)
    rate = -min((full[m - 1] - full[k]) / (1 + full[m - 1]) for k in range(3) if k != m - 1)
    # monotone growth of the winner and distance decay at the slowest linear rate
    assert np.all(np.diff(p.x_full[:, m - 1]) >= -1e-15)
    dist = np.linalg.norm(np.delete(p.x_full, m - 1, axis=1), axis=1)
    ok = (dist < 1e-4) & (dist > 1e-12)
    slope = np.polyfit(p.t[ok], np.log(dist[ok]), 1)[0]
    assert slope == pytest.approx(rate, rel=0.1)


def test_trap_region_is_never_left():
    # species 1 always disadvantaged against species 3: x^1 < b (1 - x^2) is forward invariant
    env = EnvironmentModel([[-0.3, 0.4], [-0.1, -0.5]], [[-1, 1], [1, -1]])
    b = 0.4
    x0 = [0.2, 0.3]
    assert x0[0] < b * (1 - x0[1])
    for seed in range(5):
        p = simulate_pdmp(x0, 0, env, 100.0, 0.05, seed=seed)
        assert np.all(p.x[:, 0] < b * (1 - p.x[:, 1]) + 1e-9)


def test_invalid_simulation_arguments():
    env = two_species(1.0, -0.4)
    with pytest.raises(ModelError):
        simulate_pdmp([0.5], 2, env, 1.0)
    with pytest.raises(ModelError):
        simulate_pdmp([0.5, 0.1], 0, env, 1.0)
