import numpy as np
import pytest

from hjvisc.errors import ConfigurationError, ConstructionError
from hjvisc.hamiltonian import custom, norm_type, quadratic, transport_quadratic
from hjvisc.legendre import (build_psi, conjugate, fenchel_young_gap, h_bar, lagrangian,
                             legendre_rows)
from hjvisc.testfunc import quadratic_bump


def brute_conjugate(Hfun, v, p_max, n=200_001):
    """Independent oracle: plain scan over a fine 1D p-grid."""
    p = np.linspace(-p_max, p_max, n)
    return float(np.max(p * v - Hfun(p)))


@pytest.mark.parametrize("method", ["analytic", "grid"])
def test_self_dual_quadratic(method):
    res = conjugate(quadratic(1), [0.0], [1.0], method=method)
    assert res.value == pytest.approx(0.5, abs=1e-9)
    assert res.argmax_p[0] == pytest.approx(1.0, abs=1e-6)
    assert not res.saturated


@pytest.mark.parametrize("H", [quadratic(1, 0.5), transport_quadratic(1, drift=0.7),
                               norm_type(1, 1.0, 2.0)])
def test_zero_velocity_cost_is_nonnegative(H):
    x = np.linspace(-1, 1, 9)[:, None]
    L = conjugate(H.without_conjugate(), x, np.zeros_like(x)).value
    assert np.all(L >= -1e-12)


def test_norm_type_saturation_grows_with_search_box():
    v_in, v_out = 0.5, 2.0
    for p_max in (1.0, 10.0, 100.0):
        H = norm_type(1, weight=1.0, p_max=p_max).without_conjugate()
        inside = conjugate(H, [0.0], [v_in])
        assert inside.value == pytest.approx(0.0, abs=1e-12) and not inside.saturated
        out = conjugate(H, [0.0], [v_out])
        assert out.saturated
        # the scan oracle grows like p_max (v - 1): no finite supremum
        oracle = brute_conjugate(np.abs, v_out, p_max)
        assert out.value == pytest.approx(oracle, rel=1e-6)
        assert out.value == pytest.approx(p_max * (v_out - 1.0), rel=1e-6)
        assert np.isinf(lagrangian(H, [0.0], [v_out]))


def test_grid_conjugate_matches_scan_oracle_for_nonsymmetric_h():
    H = custom(lambda x, p: np.sum(0.25 * p ** 4 + 0.3 * p ** 3 / (1 + p * p), axis=-1), 1, p_max=5.0)
    for v in (-2.0, -0.3, 0.0, 0.8, 3.0):
        ref = brute_conjugate(lambda p: 0.25 * p ** 4 + 0.3 * p ** 3 / (1 + p * p), v, 5.0)
        assert conjugate(H, [0.0], [v]).value == pytest.approx(ref, abs=1e-8)


def test_two_dimensional_grid_conjugate():
    H = transport_quadratic(2, drift=[0.2, -0.4])
    rng = np.random.default_rng(0)
    x, v = rng.uniform(-1, 1, (20, 2)), rng.uniform(-1.5, 1.5, (20, 2))
    grid = conjugate(H.without_conjugate(), x, v).value
    np.testing.assert_allclose(grid, H.conjugate(x, v), atol=1e-6)


def test_fenchel_young_examples():
    H = quadratic(1)
    assert fenchel_young_gap(H, [0.0], [1.0], [1.0]) == pytest.approx(0.0)
    assert fenchel_young_gap(H, [0.0], [1.0], [0.0]) == pytest.approx(0.5)


def test_fenchel_young_infinite_cost():
    H = norm_type(1, weight=1.0)
    assert np.isinf(fenchel_young_gap(H, [0.0], [3.0], [0.5]))


@pytest.mark.parametrize("method, floor", [("analytic", -1e-9), ("grid", -1e-3)])
def test_fenchel_young_monte_carlo(method, floor):
    rng = np.random.default_rng(1)
    H = transport_quadratic(1, drift=0.5, drift_matrix=[[-0.3]], p_max=8.0)
    n = 10_000
    x, v, p = rng.uniform(-1, 1, (3, n, 1))
    v *= 3
    p *= 4
    assert np.min(fenchel_young_gap(H, x, v, p, method=method)) >= floor


def test_fenchel_young_equality_at_dual_pair():
    H = transport_quadratic(1, drift=0.3)
    x, v = np.array([[0.2]]), np.array([[1.1]])
    p = H.dual_map(x, v)
    assert abs(fenchel_young_gap(H, x, v, p)[0]) <= 1e-12


def test_h_bar_examples():
    K = np.linspace(-1, 1, 11)
    assert h_bar(quadratic(1), K, 2.0) == pytest.approx(2.0)
    assert h_bar(norm_type(1, 1.0), K, 3.0) == pytest.approx(3.0)
    H = custom(lambda x, p: 0.5 * p[..., 0] ** 2 + x[..., 0] * p[..., 0], 1)
    assert h_bar(H, K, 1.0) == pytest.approx(1.5)


def test_h_bar_two_dimensional_ball():
    K = np.zeros((1, 2))
    assert h_bar(quadratic(2), K, 2.0) == pytest.approx(2.0)


def test_h_bar_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        h_bar(quadratic(1), np.empty((0, 1)), 1.0)
    with pytest.raises(ConfigurationError):
        h_bar(quadratic(1), [0.0], 0.0)


def test_psi_closed_form_and_monotone():
    H = quadratic(1)
    K = np.linspace(-1, 1, 41)[:, None]
    f = quadratic_bump([0.1], 1.0, 0.7)
    psi = build_psi(H, f, K, v_max=4.0)
    r = np.geomspace(1e-5, 7.0, 300)
    np.testing.assert_allclose(psi(r), psi.c_fk * np.sqrt(2 * r), rtol=1e-3)
    assert np.all(np.diff(psi(r)) >= 0)
    ratio = psi.rows()[:, 2]
    assert ratio[-1] < 0.1 * ratio[0]


def test_psi_two_dimensional_domination():
    H = quadratic(2, scale=2.0)
    K = np.random.default_rng(0).uniform(-0.5, 0.5, (30, 2))
    f = quadratic_bump([0.0, 0.1], 1.5, 0.6)
    psi = build_psi(H, f, K, v_max=5.0, n_dirs=16)
    q = np.random.default_rng(1).uniform(-3, 3, (2000, 2))
    x = K[np.arange(2000) % 30]
    lhs = np.abs(np.sum(f.grad(x) * q, axis=-1))
    assert np.all(lhs <= psi(H.conjugate(x, q)) * (1 + 1e-9) + 1e-12)


def test_psi_flat_band_is_a_construction_error():
    # L = 0 on |v| <= 1, so L/|v| does not grow there
    H = norm_type(1, weight=1.0, scale=1.0)
    with pytest.raises(ConstructionError):
        build_psi(H, quadratic_bump([0.0], 1.0, 0.5), np.zeros((1, 1)), v_max=3.0)


def test_psi_rejects_bad_table_range():
    with pytest.raises(ConfigurationError):
        build_psi(quadratic(1), quadratic_bump([0.0], 1.0, 0.5), np.zeros((1, 1)), s_min=2.0,
                  v_max=1.0)


def test_legendre_rows_layout():
    rows = legendre_rows(quadratic(1), [0.0], np.array([-1.0, 0.0, 2.0]))
    assert [r[2] for r in rows] == pytest.approx([0.5, 0.0, 2.0])
    assert not any(r[4] for r in rows)
