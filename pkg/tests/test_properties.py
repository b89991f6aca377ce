"""Structural invariants checked on randomly drawn inputs."""
import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hjvisc.grid import build_grid, grid_1d
from hjvisc.hamiltonian import quadratic, transport_quadratic
from hjvisc.isaacs import cost_game, drift_game, h_lower, h_upper
from hjvisc.legendre import fenchel_young_gap
from hjvisc.trajectories import concat, random_curve, shift
from hjvisc.value import (lsc_regularize, solve_stationary, stationary_operator,
                          uniform_velocities, usc_regularize)

TORUS = grid_1d(0.0, 1.0, 24, kind="torus")
BOX2 = build_grid({"kind": "box", "lower": [-1, -1], "upper": [1, 1], "nodes": [9, 8]})
H = transport_quadratic(1, drift=0.3)
OP = stationary_operator(H, TORUS, 0.4, lambda x: np.sin(2 * np.pi * x[..., 0]), 0.05,
                         uniform_velocities(1, 2.0, 21))

finite = st.floats(-5, 5, allow_nan=False)
fields = arrays(np.float64, TORUS.size, elements=finite)
small = settings(max_examples=40, deadline=None)


@small
@given(fields, fields)
def test_sweep_is_a_beta_contraction(a, b):
    gap = np.max(np.abs(OP(a) - OP(b)))
    assert gap <= OP.beta * np.max(np.abs(a - b)) + 1e-12


@small
@given(fields, arrays(np.float64, TORUS.size, elements=st.floats(0, 3)))
def test_sweep_is_monotone(a, bump):
    assert np.all(OP(a) <= OP(a + bump) + 1e-12)


@small
@given(fields, st.floats(-4, 4))
def test_sweep_commutes_with_constants(a, c):
    np.testing.assert_allclose(OP(a + c), OP(a) + OP.beta * c, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 3.0), st.integers(1, 3), st.floats(0.05, 1.0))
def test_value_bounded_by_data(amp, freq, lam):
    h = lambda x: amp * np.sin(2 * np.pi * freq * x[..., 0])
    R = solve_stationary(quadratic(1), TORUS, lam, h, 0.05, uniform_velocities(1, 2.0, 11))
    assert R.sup_norm <= amp + 1e-8


@small
@given(arrays(np.float64, BOX2.size, elements=finite), st.booleans(), st.integers(1, 2))
def test_envelopes_sandwich_and_compose(vals, periodic, r):
    grid = BOX2 if not periodic else build_grid({**BOX2.describe(), "kind": "torus"})
    hi, lo = usc_regularize(vals, grid, r), lsc_regularize(vals, grid, r)
    assert np.all(lo <= vals) and np.all(vals <= hi)
    np.testing.assert_array_equal(usc_regularize(hi, grid, r), usc_regularize(vals, grid, 2 * r))
    np.testing.assert_array_equal(lsc_regularize(lo, grid, r), lsc_regularize(vals, grid, 2 * r))


@small
@given(st.floats(-1, 1), st.floats(-5, 5), st.floats(-5, 5))
def test_fenchel_young_gap_nonnegative(x, v, p):
    gap = fenchel_young_gap(H, np.array([x]), np.array([v]), np.array([p]))
    assert gap >= -1e-9


@small
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_concat_then_shift_recovers_the_tail(seed, frac):
    rng = np.random.default_rng(seed)
    a = random_curve(rng, TORUS, 3)
    t = frac * a.horizon
    b = random_curve(rng, TORUS, 3, x0=a.position(t))
    c = concat(a, b, t)
    assert np.isclose(c.horizon, t + b.horizon)
    tail = shift(c, t)
    s = np.linspace(0, b.horizon, 7)
    d = TORUS.distance(tail.position(s), b.position(s))
    assert np.max(d) <= 1e-9
    s = np.linspace(0, t, 5)
    assert np.max(TORUS.distance(c.position(s), a.position(s))) <= 1e-12


@small
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_weak_duality_for_random_games(n1, n2, seed):
    rng = np.random.default_rng(seed)
    game = cost_game(np.arange(n1), np.arange(n2), rng.uniform(0, 2, (n1, n2)))
    x = np.zeros((8, 1))
    p = rng.uniform(-3, 3, (8, 1))
    assert np.all(h_lower(game, x, p) - h_upper(game, x, p) >= -1e-12)


@small
@given(arrays(np.float64, 3, elements=st.floats(0, 1)), arrays(np.float64, 2, elements=st.floats(0, 1)),
       arrays(np.float64, 3, elements=st.floats(-1, 1)), arrays(np.float64, 2, elements=st.floats(-1, 1)),
       st.floats(-4, 4))
def test_separable_games_have_no_gap(c1, c2, t1, t2, p):
    game = drift_game(t1, t2, c1, c2)
    x, q = np.zeros((1, 1)), np.array([[p]])
    assert abs(h_lower(game, x, q) - h_upper(game, x, q))[0] <= 1e-12
