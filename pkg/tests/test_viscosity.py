import numpy as np
import pytest

from hjvisc.containment import standard_containment, zero_containment
from hjvisc.errors import ConfigurationError, DomainError
from hjvisc.grid import build_grid, grid_1d
from hjvisc.hamiltonian import quadratic, transport_quadratic
from hjvisc.testfunc import constant, paraboloid, quadratic_bump
from hjvisc.value import solve_evolutionary, solve_stationary
from hjvisc.viscosity import (almost_optimizer, build_dagger, build_ddagger, certify_evolutionary,
                              certify_stationary, default_family, default_tol,
                              envelope_residual, time_tests)

Q = quadratic(1)
TORUS = grid_1d(0.0, 1.0, 101, kind="torus")
BOX = grid_1d(-2.0, 2.0, 81)


def test_zero_test_function_on_torus():
    pair = build_dagger(constant(0.0), 0.5, zero_containment(), Q)
    np.testing.assert_array_equal(pair.f_nodes(TORUS), 0.0)
    np.testing.assert_array_equal(pair.g_nodes(TORUS), 0.0)


def test_formulas_at_every_node():
    H = transport_quadratic(1, drift=0.3)
    ups = standard_containment(BOX, H)
    f = quadratic_bump([0.4], 1.0, 0.8)
    x = BOX.points
    d = build_dagger(f, 0.1, ups, H)
    np.testing.assert_allclose(d.f_nodes(BOX), 0.9 * f(x) + 0.1 * ups(x), atol=1e-12)
    np.testing.assert_allclose(d.g_nodes(BOX), 0.9 * H(x, f.grad(x)) + 0.1 * ups.c_upsilon, atol=1e-12)
    dd = build_ddagger(f, 0.1, ups, H)
    np.testing.assert_allclose(dd.f_nodes(BOX), 1.1 * f(x) - 0.1 * ups(x), atol=1e-12)
    np.testing.assert_allclose(dd.g_nodes(BOX), 1.1 * H(x, f.grad(x)) - 0.1 * ups.c_upsilon, atol=1e-12)
    np.testing.assert_allclose(d.df(x), 0.9 * f.grad(x) + 0.1 * ups.d_upsilon(x), atol=1e-12)


def test_parameter_and_domain_errors():
    with pytest.raises(ConfigurationError):
        build_dagger(constant(0.0), 0.0, zero_containment(), Q)
    with pytest.raises(ConfigurationError):
        build_ddagger(constant(0.0), 1.0, zero_containment(), Q)
    with pytest.raises(DomainError):
        build_dagger(paraboloid([0.0], -1.0), 0.2, zero_containment(), Q)
    with pytest.raises(DomainError):
        build_ddagger(paraboloid([0.0], 1.0), 0.2, zero_containment(), Q)


@pytest.mark.parametrize("H", [quadratic(2), transport_quadratic(2, drift=[0.2, -0.1],
                                                                 drift_matrix=[[0, 1], [-1, 0]])])
def test_envelope_signs_for_convex_h(H):
    g = build_grid({"lower": [-2, -2], "upper": [2, 2], "nodes": [31, 31]})
    ups = standard_containment(g, H)
    for pair in default_family(g, H, ups):
        res = envelope_residual(pair, g)
        if pair.kind == "dagger":
            assert np.max(res) <= 1e-12
        else:
            assert np.min(res) >= -1e-12


def test_family_layout():
    fam = default_family(TORUS, Q, zero_containment())
    assert len(fam) == 40
    assert sum(p.kind == "dagger" for p in fam) == 20
    assert {p.eps for p in fam} == {0.05, 0.2}
    assert all(p.base.curvature < 0 for p in fam if p.kind == "dagger")


def test_almost_optimizer_finds_the_containment_centre():
    ups = standard_containment(BOX, Q)
    pair = build_dagger(constant(0.0), 0.5, ups, Q)
    opt = almost_optimizer(constant(0.0), pair, BOX)
    assert opt.point[0] == pytest.approx(0.0)
    assert pair.f_nodes(BOX)[opt.node] <= opt.bound


def test_almost_optimizer_sequence_mode():
    pair = build_dagger(quadratic_bump([0.3], -1.0, 0.3, grid=TORUS), 0.2, zero_containment(), Q)
    phi = lambda x: np.sin(2 * np.pi * x[..., 0])
    coarse = almost_optimizer(phi, pair, TORUS, n=1)
    fine = almost_optimizer(phi, pair, TORUS, n=1e6)
    assert coarse.gap <= 1.0 and fine.gap <= 1e-6
    for opt in (coarse, fine):
        assert pair.f_nodes(TORUS)[opt.node] <= opt.bound


def test_constant_field_certificates_are_exact():
    R = solve_stationary(Q, TORUS, 0.5, constant(0.4), 0.01)
    rep = certify_stationary(R, Q, zero_containment(), 0.5, constant(0.4),
                             [build_dagger(constant(0.0), 0.3, zero_containment(), Q),
                              build_ddagger(constant(0.0), 0.3, zero_containment(), Q)], tol=1e-8)
    assert rep.passed
    assert [abs(r.residual) for r in rep.results] == [0.0, 0.0]


def test_empty_family_rejected():
    R = solve_stationary(Q, TORUS, 0.5, constant(0.4), 0.01)
    with pytest.raises(ConfigurationError):
        certify_stationary(R, Q, zero_containment(), 0.5, constant(0.4), [])


def test_sin_scenario_passes_and_detects_spikes(sin_solution):
    sc, R = sin_solution
    fam = sc.family()
    tol = default_tol(sc.grid, sc.tau)
    assert tol == pytest.approx(0.1)
    rep = certify_stationary(R, sc.hamiltonian, sc.containment, sc.lam, sc.data, fam, tol)
    assert rep.passed and len(rep.sub_results) == 20
    node = rep.sub_results[0].node
    spiked = R.values.copy()
    spiked[node] += 10 * tol
    bad = certify_stationary(R.with_values(spiked), sc.hamiltonian, sc.containment, sc.lam,
                             sc.data, fam, tol)
    assert not all(r.passed for r in bad.sub_results)


def test_sub_tolerance_perturbations_keep_verdicts(sin_solution):
    sc, R = sin_solution
    fam = sc.family()
    tol = default_tol(sc.grid, sc.tau)
    base = certify_stationary(R, sc.hamiltonian, sc.containment, sc.lam, sc.data, fam, tol)
    rng = np.random.default_rng(0)
    for _ in range(3):
        delta = rng.uniform(-tol / 10, tol / 10, R.values.size)
        rep = certify_stationary(R.with_values(R.values + delta), sc.hamiltonian, sc.containment,
                                 sc.lam, sc.data, fam, tol)
        assert rep.verdicts() == base.verdicts()


def test_enlarging_the_family_never_rescues_a_failure(sin_solution):
    sc, R = sin_solution
    fam = sc.family()
    vals = R.values.copy()
    vals[10] += 1.0
    bad = R.with_values(vals)
    small = certify_stationary(bad, sc.hamiltonian, sc.containment, sc.lam, sc.data, fam[:6], 0.1)
    large = certify_stationary(bad, sc.hamiltonian, sc.containment, sc.lam, sc.data, fam, 0.1)
    assert not small.passed or not large.passed
    if not small.passed:
        assert not large.passed


def test_report_serialises():
    R = solve_stationary(Q, TORUS, 0.5, constant(0.4), 0.01)
    fam = default_family(TORUS, Q, zero_containment())[:4]
    d = certify_stationary(R, Q, zero_containment(), 0.5, constant(0.4), fam,
                           with_trace=True).to_dict()
    assert d["aggregate"] == "pass" and d["n_pairs"] == 4
    assert {"kind", "eps", "center", "x0", "residual", "tol", "verdict", "trace"} <= set(d["pairs"][0])
    assert "not a proof" in d["note"]


def test_evolutionary_constant_and_time_branch():
    v = solve_evolutionary(Q, TORUS, 0.0, constant(0.2), 0.1, 0.01)
    pairs = [build_dagger(constant(0.0), 0.2, zero_containment(), Q),
             build_ddagger(constant(0.0), 0.2, zero_containment(), Q)]
    rep = certify_evolutionary(v, Q, zero_containment(), 0.0, constant(0.2), pairs,
                               tests=[(0.0, 0.0)], tol=1e-12)
    assert rep.passed
    # g(t) = t pushes the subsolution optimiser to t0 = 0, where the initial-data branch rescues it
    rep = certify_evolutionary(v, Q, zero_containment(), 0.0, constant(0.2), pairs[:1],
                               tests=[(1.0, 0.0)], tol=1e-12)
    r = rep.results[0]
    assert r.t0 == 0.0 and r.branch == "initial" and r.passed


def test_hopf_lax_field_certificates(load_scenario):
    sc = load_scenario("hopf_lax_box.json")
    v = solve_evolutionary(sc.hamiltonian, sc.grid, sc.lam, sc.data, sc.problem["T"], sc.tau,
                           sc.velocities)
    rep = certify_evolutionary(v, sc.hamiltonian, sc.containment, sc.lam, sc.data, sc.family(),
                               tests=time_tests(), tol=default_tol(sc.grid, sc.tau))
    assert rep.passed
    assert len(rep.results) == 3 * len(sc.family())
