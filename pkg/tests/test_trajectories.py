import numpy as np
import pytest

from hjvisc.containment import standard_containment, zero_containment
from hjvisc.errors import CapabilityError, ConfigurationError, IntegrationError, SpliceError
from hjvisc.grid import build_grid, grid_1d
from hjvisc.hamiltonian import norm_type, quadratic, transport_quadratic
from hjvisc.testfunc import constant, paraboloid, quadratic_bump
from hjvisc.trajectories import (Curve, action_cost, concat, containment_check,
                                 diff_inclusion_path, fenchel_young_along, j_lambda,
                                 j_lambda_payoff, j_lambda_window, random_curve, shift,
                                 w_lambda, young_residual)

Q = quadratic(1)


def linear(x0, v, T, grid=None):
    return Curve.from_velocities([x0], [T], [[v]], grid)


def test_knot_validation():
    with pytest.raises(ConfigurationError):
        Curve.from_points([0.0, 0.5, 0.5], [[0.0], [1.0], [2.0]])
    with pytest.raises(ConfigurationError):
        Curve.from_points([0.1, 0.5], [[0.0], [1.0]])
    with pytest.raises(ConfigurationError):
        Curve.from_velocities([0.0], [0.0], [[1.0]])


def test_torus_segments_take_the_short_way():
    g = grid_1d(0.0, 1.0, 10, kind="torus")
    c = Curve.from_points([0.0, 1.0], [[0.9], [0.1]], g)
    assert c.velocities[0, 0] == pytest.approx(0.2)
    assert c.position(0.5)[0] == pytest.approx(0.0, abs=1e-12) or c.position(0.5)[0] == pytest.approx(1.0)


def test_box_curve_stops_at_the_wall():
    g = grid_1d(-1.0, 1.0, 21)
    c = linear(0.0, 1.0, 3.0, g)
    assert c.position(1.0)[0] == pytest.approx(1.0)
    assert c.position(2.5)[0] == pytest.approx(1.0)
    assert c.velocities[-1, 0] == 0.0
    assert c.max_reconstruction_error() <= 1e-12


def test_shift_examples():
    const = Curve.constant([0.4], 1.0)
    s = shift(const, 0.3)
    assert s.horizon == pytest.approx(0.7)
    np.testing.assert_allclose(s.points, 0.4)

    lin = linear(0.0, 2.0, 1.0)
    s = shift(lin, 0.5)
    assert s.horizon == pytest.approx(0.5)
    assert s.position(0.0)[0] == pytest.approx(1.0)
    assert s.position(0.5)[0] == pytest.approx(2.0)

    two = Curve.from_velocities([0.0], [1.0, 2.0], [[1.0], [-0.5]])
    s = shift(two, 1.0)
    assert s.n_segments == 1 and s.times[0] == 0.0
    assert s.velocities[0, 0] == pytest.approx(-0.5)


def test_shift_beyond_horizon():
    with pytest.raises(ConfigurationError):
        shift(Curve.constant([0.0], 1.0), 1.0)


def test_concat_examples():
    a = Curve.constant([0.2], 1.0)
    b = Curve.constant([0.2], 1.0)
    c = concat(a, b, 1.0)
    assert c.horizon == pytest.approx(2.0)
    np.testing.assert_allclose(c.points, 0.2)

    up = linear(0.0, 1.0, 1.0)
    down = linear(1.0, -2.0, 0.5)
    c = concat(up, down, 1.0)
    assert c.n_segments == 2
    assert c.position(1.5)[0] == pytest.approx(0.0)


def test_concat_inside_a_segment_drops_the_tail():
    c = concat(linear(0.0, 1.0, 2.0), Curve.constant([0.5], 1.0), 0.5)
    assert c.horizon == pytest.approx(1.5)
    assert c.position(1.2)[0] == pytest.approx(0.5)


def test_splice_gap_reported():
    with pytest.raises(SpliceError) as exc:
        concat(Curve.constant([0.0], 1.0), Curve.constant([0.1], 1.0), 1.0)
    assert exc.value.gap == pytest.approx(0.1)


def test_concat_on_torus_uses_torus_distance():
    g = grid_1d(0.0, 1.0, 10, kind="torus")
    a = Curve.constant([0.0], 1.0, g)
    b = Curve.constant([1.0 - 1e-12], 1.0, g)
    assert concat(a, b, 1.0).horizon == pytest.approx(2.0)


def test_action_examples():
    assert action_cost(Q, Curve.constant([0.3], 2.0)) == 0.0
    assert action_cost(Q, linear(0.0, 1.0, 2.0)) == pytest.approx(1.0)
    assert np.isinf(action_cost(norm_type(1, 1.0), linear(0.0, 2.0, 1.0)))
    # the same through the saturating grid conjugate
    assert np.isinf(action_cost(norm_type(1, 1.0).without_conjugate(), linear(0.0, 2.0, 1.0)))


def _split(rng, c):
    T1 = rng.uniform(0.05, 0.6) * c.horizon
    return T1, rng.uniform(0.05, 0.95) * (c.horizon - T1)


@pytest.mark.parametrize("H", [quadratic(1, 0.7), transport_quadratic(1, drift=0.3)])
def test_action_additivity_exact_for_state_free_costs(H):
    rng = np.random.default_rng(4)
    g = grid_1d(-3.0, 3.0, 61)
    for _ in range(20):
        c = random_curve(rng, g, n_segments=6)
        T1, T2 = _split(rng, c)
        whole = action_cost(H, c, T1 + T2)
        parts = action_cost(H, c, T1) + action_cost(H, shift(c, T1), T2)
        assert whole == pytest.approx(parts, abs=1e-12)


def test_action_additivity_to_quadrature_order_for_state_dependent_costs():
    # re-knotting at T1 moves one midpoint, an O(dt^3) change per split segment
    rng = np.random.default_rng(4)
    g = grid_1d(-3.0, 3.0, 61)
    H = transport_quadratic(1, drift=0.3, drift_matrix=[[-0.5]])
    for _ in range(20):
        c = random_curve(rng, g, n_segments=6, max_duration=0.1)
        T1, T2 = _split(rng, c)
        whole = action_cost(H, c, T1 + T2)
        parts = action_cost(H, c, T1) + action_cost(H, shift(c, T1), T2)
        assert whole == pytest.approx(parts, abs=1e-3)


def test_j_lambda_constant_curve_and_constant_data():
    h = lambda x: np.cos(3 * x[..., 0])
    for lam in (0.05, 1.0, 7.0):
        assert j_lambda(Q, Curve.constant([0.4], 1.0), lam, h) == pytest.approx(np.cos(1.2), abs=1e-12)
    H = transport_quadratic(1, drift=0.5)
    drift_curve = linear(0.0, 0.5, 2.0)
    # resting after the horizon costs L(x, 0) = 1/8, charged on the exponential tail
    tail = 0.3 * 0.125 * np.exp(-2.0 / 0.3)
    assert j_lambda(H, drift_curve, 0.3, constant(2.5)) == pytest.approx(2.5 - tail, abs=1e-12)


def test_j_lambda_against_refined_quadrature_and_closed_form():
    g = grid_1d(-1.0, 1.0, 21)
    c = linear(0.0, 1.0, 5.0, g)
    h = lambda x: x[..., 0]
    val = j_lambda(Q, c, 1.0, h, T_cut=5.0)
    fine = j_lambda(Q, c, 1.0, h, T_cut=5.0, dt_max=1.0 / 320)
    assert abs(val - fine) <= 1e-3 * abs(fine)
    # int e^-t (min(t,1) - min(t,1)/2) dt = (1 - 1/e) / 2
    assert fine == pytest.approx(0.5 * (1 - np.exp(-1)), rel=1e-4)


def test_j_lambda_tail_flag():
    H = transport_quadratic(1, drift=0.5)     # L(x, 0) = 1/8 > 0
    pay = j_lambda_payoff(H, Curve.constant([0.0], 1.0), 0.5, constant(0.0))
    assert pay.approximate
    assert not j_lambda_payoff(Q, Curve.constant([0.0], 1.0), 0.5, constant(0.0)).approximate


def test_j_lambda_infinite_action():
    assert j_lambda(norm_type(1, 1.0), linear(0.0, 3.0, 1.0), 0.5, constant(0.0)) == -np.inf


def test_j_lambda_window_identity():
    rng = np.random.default_rng(5)
    g = grid_1d(-2.0, 2.0, 41)
    h = lambda x: np.sin(2 * x[..., 0])
    lam = 0.4
    for _ in range(10):
        c = random_curve(rng, g, n_segments=4, max_duration=0.6)
        T = rng.uniform(0.1, 0.9) * c.horizon
        lhs = j_lambda(Q, c, lam, h)
        rhs = j_lambda_window(Q, c, lam, h, T) + np.exp(-T / lam) * j_lambda(Q, shift(c, T), lam, h)
        assert lhs == pytest.approx(rhs, abs=1e-4)


def test_w_lambda_examples():
    u0 = lambda x: 1.0 + x[..., 0]
    c = linear(0.2, 1.0, 1.0)
    assert w_lambda(Q, c, 0.0, 0.7, u0) == pytest.approx(1.2)
    assert w_lambda(Q, Curve.constant([0.3], 1.0), 1.0, 0.0, u0) == pytest.approx(1.3)
    assert w_lambda(Q, c, 1.0, 0.0, constant(0.0)) == pytest.approx(-0.5)
    # discounted: -(1 - e^-lam)/lam * 1/2 + e^-lam u0(1.2)
    lam = 0.5
    expect = -(1 - np.exp(-lam)) / lam * 0.5 + np.exp(-lam) * 2.2
    assert w_lambda(Q, c, 1.0, lam, u0) == pytest.approx(expect, abs=1e-12)
    with pytest.raises(ConfigurationError):
        w_lambda(Q, c, 1.0, -1.0, u0)


def test_containment_examples():
    tor = grid_1d(0.0, 1.0, 20, kind="torus")
    c = linear(0.1, 1.0, 1.0, tor)
    assert containment_check(Q, zero_containment(), c) == pytest.approx(-action_cost(Q, c))
    box = grid_1d(-3.0, 3.0, 121)
    ups = standard_containment(box, Q)
    assert containment_check(Q, ups, Curve.constant([1.0], 2.0, box)) == pytest.approx(-2 * ups.c_upsilon)


@pytest.mark.parametrize("H", [quadratic(2), transport_quadratic(2, drift=[0.3, -0.2])])
def test_containment_monte_carlo_box(H):
    g = build_grid({"lower": [-2, -2], "upper": [2, 2], "nodes": [41, 41]})
    ups = standard_containment(g, H)
    rng = np.random.default_rng(6)
    res = [containment_check(H, ups, random_curve(rng, g, speed=1.5)) for _ in range(100)]
    assert max(res) <= 1e-9


def test_diff_inclusion_constant_f_and_drift():
    c = diff_inclusion_path(Q, constant(1.0), [0.3], 1.0, 0.01)
    np.testing.assert_allclose(c.points, 0.3)
    assert action_cost(Q, c) == 0.0

    H = transport_quadratic(1, drift=0.4)
    c = diff_inclusion_path(H, constant(0.0), [0.0], 1.0, 0.01)
    assert c.position(1.0)[0] == pytest.approx(0.4)
    assert action_cost(H, c) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("b", [0.5, 1.0, 3.0])
def test_diff_inclusion_exponential(b):
    c = diff_inclusion_path(Q, paraboloid([0.0], -b), [0.8], 1.0, 1e-3)
    t = np.linspace(0, 1, 11)
    np.testing.assert_allclose(c.position(t)[:, 0], 0.8 * np.exp(-b * t), atol=1e-9)
    assert abs(c.meta["young_residual"]) <= 1e-6


def test_diff_inclusion_capability_and_quality_errors():
    with pytest.raises(CapabilityError):
        diff_inclusion_path(norm_type(1, 1.0), constant(0.0), [0.0], 1.0, 0.1)
    # a steep bump sampled with a huge step cannot meet the Young equality
    with pytest.raises(IntegrationError) as exc:
        diff_inclusion_path(Q, quadratic_bump([0.0], 40.0, 0.3), [0.12], 1.0, 0.25, c_step=1e-6,
                            tol_conj=1e-12)
    assert exc.value.residual > exc.value.threshold


def test_fenchel_young_along_random_curves():
    rng = np.random.default_rng(8)
    g = grid_1d(-2.0, 2.0, 41)
    f = quadratic_bump([0.3], 1.0, 0.8)
    H = transport_quadratic(1, drift=0.2)
    for _ in range(30):
        c = random_curve(rng, g)
        assert fenchel_young_along(H, f, c) <= 1e-9
        assert young_residual(H, f, c) <= 1e-3


def test_csv_round_trip(tmp_path):
    g = build_grid({"kind": "torus", "lower": [0, 0], "upper": [1, 1], "nodes": [10, 10]})
    c = random_curve(np.random.default_rng(9), g)
    path = tmp_path / "curve.csv"
    c.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,x1,x2"
    back = Curve.from_csv(path, g)
    np.testing.assert_array_equal(back.times, c.times)
    np.testing.assert_allclose(back.points, c.points, atol=1e-15)
