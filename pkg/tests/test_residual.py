import numpy as np
import pytest

from curvenls import corrections as corr
from curvenls import curves, profile, residual as rh, spectral
from curvenls.ground_state import solve_ground_state
from curvenls.potentials import ConstantPotential, RadialCosinePotential
from curvenls.residual import HarnessError, HarnessSetup

P, N_DIM = 3, 2
EPS_LIST = [0.2, 0.1, 0.05]


@pytest.fixture(scope="module")
def g1():
    return solve_ground_state(P, N_DIM - 1)


@pytest.fixture(scope="module")
def main_setup(g1):
    V = RadialCosinePotential()
    r_star = profile.find_stationary_circle(V, 0.0, P, N_DIM)
    c = curves.circle(r_star, n_nodes=128)
    return HarnessSetup(curve=c, V=V, A=0.0, p=P, n=N_DIM, g=g1), r_star, V


@pytest.fixture(scope="module")
def main_entries(main_setup):
    setup, _, _ = main_setup
    return [rh.run_entry(setup, e) for e in EPS_LIST]


def test_zero_A_field_is_real(main_setup):
    setup, _, _ = main_setup
    f = rh.assemble_psi1(setup, 0.1)
    assert np.max(np.abs(f.values.imag)) < 1e-14


def test_phase_winding_matches_quantization(g1):
    V = RadialCosinePotential()
    A = 0.1
    r_star = profile.find_stationary_circle(V, A, P, N_DIM)
    c = curves.circle(r_star, n_nodes=128)
    setup = HarnessSetup(curve=c, V=V, A=A, p=P, n=N_DIM, g=g1)
    eps = rh.eps_ladder_for_quantization(setup, [0.1])[0]
    f = rh.assemble_psi1(setup, eps)
    pf = f.meta["pf"]
    total = spectral.mean_integral(pf.fprime, f.meta["curve"].L) / eps
    winding = total / (2 * np.pi)
    assert abs(winding - round(winding)) < 1e-8
    assert round(winding) >= 1


def test_unquantized_A_rejected(g1):
    V = RadialCosinePotential()
    A = 0.1
    r_star = profile.find_stationary_circle(V, A, P, N_DIM)
    c = curves.circle(r_star, n_nodes=64)
    setup = HarnessSetup(curve=c, V=V, A=A, p=P, n=N_DIM, g=g1)
    with pytest.raises(HarnessError, match="not quantized"):
        rh.assemble_psi1(setup, 0.11)


def test_center_amplitude(main_setup):
    setup, _, _ = main_setup
    eps = 0.1
    f = rh.assemble_psi1(setup, eps)
    pf = f.meta["pf"]
    mid = f.values.shape[1] // 2
    expected = pf.h * setup.g.U[0]
    assert np.max(np.abs(np.abs(f.values[:, mid]) - expected)) < 0.1 * eps


def test_not_stationary_rejected(g1):
    V = RadialCosinePotential()
    c = curves.circle(2.5, n_nodes=64)
    setup = HarnessSetup(curve=c, V=V, A=0.0, p=P, n=N_DIM, g=g1)
    with pytest.raises(HarnessError, match="Euler residual"):
        rh.assemble_psi1(setup, 0.1)


def test_straight_tube_eigenfixture(g1):
    # constant V, H = 0: psi = e^{-i w s} h U(k z) solves the profile
    # equations exactly, so the discrete residual is pure discretization
    v0, length, eps, n_s, wind = 1.0, 8.0, 0.1, 128, 3
    omega = 2 * np.pi * wind / (length / eps)
    k = np.sqrt(v0 + omega**2)
    h = k ** (2 / (P - 1))
    sig, _ = profile.exponents(P, N_DIM)
    a_eff = omega / h**sig
    line = curves.line_fixture(n=2, length=length, n_nodes=n_s)
    V = ConstantPotential(v0)
    setup = HarnessSetup(curve=line, V=V, A=a_eff, p=P, n=N_DIM, g=g1,
                         require_stationary=False, use_corrections=False,
                         z_spacing=0.02, z_order=6)
    zgrid = corr.ZGrid(d=1, R=18.0, spacing=0.02, order=6)
    z = zgrid.coords()[0]
    s_nodes = (length / eps) * np.arange(n_s) / n_s
    u = g1.evaluate(k * np.abs(z))[0]
    psi = np.exp(-1j * omega * s_nodes)[:, None] * (h * u)[None, :]
    pf = profile.build_profile(line, V, a_eff, P, N_DIM)
    f = rh.TubeField(values=psi, eps=eps, n_s=n_s, s_period=length / eps,
                     zgrid=zgrid, sbar=line.sbar, phase=omega * s_nodes,
                     jfield=np.ones((n_s, z.size)),
                     meta={"curve": line, "pf": pf,
                           "phi": np.zeros((n_s, 1)),
                           "phip": np.zeros((n_s, 1)),
                           "f1p": np.zeros(n_s), "setup": setup})
    res = rh.apply_nls_operator(f)
    mask = rh.interior_mask(zgrid)
    assert np.max(np.abs(res[:, mask])) < 1e-7
    # linearity: the nonlinear term is isolated exactly
    lin = rh.apply_nls_operator(f, linear_only=True)
    f2 = rh.TubeField(values=2 * psi, eps=eps, n_s=n_s,
                      s_period=length / eps, zgrid=zgrid, sbar=line.sbar,
                      phase=omega * s_nodes,
                      jfield=np.ones((n_s, z.size)), meta=f.meta)
    full2 = rh.apply_nls_operator(f2)
    diff = full2 - 2 * lin + np.abs(2 * psi) ** (P - 1) * (2 * psi)
    assert np.max(np.abs(diff)) < 1e-12


def test_expanded_laplacian_consistency(main_setup):
    setup, _, _ = main_setup
    diffs = []
    for eps in EPS_LIST:
        f = rh.assemble_psi1(setup, eps)
        z = f.zgrid.coords()[0]
        c = f.meta["curve"]
        bump = ((np.cos(2 * np.pi * f.sbar / c.L) + 1.5)[:, None]
                * np.exp(-0.5 * z**2)[None, :])
        ex = rh.exact_laplacian(f, bump)
        ap = rh.apply_expanded_laplacian(f, bump)
        mask = rh.interior_mask(f.zgrid)
        diffs.append(np.max(np.abs((ex - ap)[:, mask])))
    assert rh.scaling_fit(EPS_LIST, diffs) > 2.7


def test_scaling_fit_synthetic():
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    assert abs(rh.scaling_fit(eps, 3.7 * eps**2) - 2.0) < 1e-6
    with pytest.raises(ValueError):
        rh.scaling_fit([0.1, 0.05], [1.0, 0.5])


def test_main_scaling_window(main_entries):
    slope = rh.scaling_fit(EPS_LIST, [e.sup for e in main_entries])
    assert 1.7 < slope < 2.3


def test_norms_decrease(main_entries):
    sups = [e.sup for e in main_entries]
    assert sups[0] > sups[1] > sups[2] > 0


def test_kernel_projection_superconvergence(main_entries):
    slope = rh.scaling_fit(EPS_LIST, [e.proj_real_sup for e in main_entries])
    assert slope > 2.5


def test_imag_projection_vanishes_without_phase(main_entries):
    assert max(e.proj_imag_sup for e in main_entries) < 1e-14


def test_ablation_no_corrections(main_setup):
    setup, _, _ = main_setup
    nc = HarnessSetup(curve=setup.curve, V=setup.V, A=0.0, p=P, n=N_DIM,
                      g=setup.g, use_corrections=False)
    entries = [rh.run_entry(nc, e) for e in EPS_LIST]
    slope = rh.scaling_fit(EPS_LIST, [e.sup for e in entries])
    assert 0.8 < slope < 1.3


def test_ablation_off_stationary(main_setup, g1):
    _, r_star, V = main_setup
    c_off = curves.circle(r_star + 0.1, n_nodes=128)
    off = HarnessSetup(curve=c_off, V=V, A=0.0, p=P, n=N_DIM, g=g1,
                       require_stationary=False, check_wro_solvability=False)
    entries = [rh.run_entry(off, e) for e in EPS_LIST]
    slope = rh.scaling_fit(EPS_LIST, [e.sup for e in entries])
    assert 0.8 < slope < 1.3
    proj_slope = rh.scaling_fit(EPS_LIST, [e.proj_real_sup for e in entries])
    assert proj_slope < 1.5


def test_gauge_covariance(main_setup):
    setup, _, _ = main_setup
    f = rh.assemble_psi1(setup, 0.1)
    base = rh.residual_norms(f, rh.apply_nls_operator(f))
    f.values = f.values * np.exp(1j * 0.83)
    rot = rh.residual_norms(f, rh.apply_nls_operator(f))
    assert abs(base["sup"] - rot["sup"]) < 1e-12
    assert abs(base["l2"] - rot["l2"]) < 1e-12


def test_grid_refinement_stability(main_setup, g1):
    setup, r_star, V = main_setup
    fine = HarnessSetup(curve=setup.curve, V=V, A=0.0, p=P, n=N_DIM, g=g1,
                        z_spacing=setup.z_spacing / 2)
    e_base = rh.run_entry(setup, 0.1)
    e_fine = rh.run_entry(fine, 0.1)
    assert abs(e_base.sup - e_fine.sup) / e_fine.sup < 0.05
    assert abs(e_base.l2 - e_fine.l2) / e_fine.l2 < 0.05


def test_f1_improves_imag_projection(g1):
    V = RadialCosinePotential()
    A = 0.1
    r_star = profile.find_stationary_circle(V, A, P, N_DIM)
    c = curves.circle(r_star, n_nodes=128)
    phi_comp = np.cos(2 * np.pi * c.sbar / c.L)[:, None]
    with_f1 = HarnessSetup(curve=c, V=V, A=A, p=P, n=N_DIM, g=g1,
                           phi_comp=phi_comp, z_spacing=0.03)
    eps_list = rh.eps_ladder_for_quantization(with_f1, [0.1, 0.05, 0.025])
    e_f1 = [rh.run_entry(with_f1, e) for e in eps_list]
    no_f1 = HarnessSetup(curve=c, V=V, A=A, p=P, n=N_DIM, g=g1,
                         phi_comp=phi_comp, f1_mode="zero", z_spacing=0.03)
    e_0 = [rh.run_entry(no_f1, e) for e in eps_list]
    s_f1 = rh.scaling_fit(eps_list, [e.proj_imag_sup for e in e_f1])
    s_0 = rh.scaling_fit(eps_list, [e.proj_imag_sup for e in e_0])
    assert s_f1 - s_0 >= 0.4


def test_holonomy_rejected(g1):
    tk = curves.torus_knot(n_nodes=128)
    with pytest.raises(HarnessError, match="holonomy"):
        HarnessSetup(curve=tk, V=ConstantPotential(1.0), A=0.0, p=P, n=3,
                     g=g1)


def test_zero_field_zero_residual(main_setup):
    setup, _, _ = main_setup
    f = rh.assemble_psi1(setup, 0.1)
    f.values = np.zeros_like(f.values)
    res = rh.apply_nls_operator(f)
    assert np.max(np.abs(res)) == 0.0


def test_boundary_smallness_flag(main_setup):
    setup, _, _ = main_setup
    # at eps = 0.05 the full decay tube fits and the tail is tiny
    f = rh.assemble_psi1(setup, 0.05)
    assert f.meta["boundary_small"]
    # at eps = 0.2 the fold cap truncates before full decay
    f2 = rh.assemble_psi1(setup, 0.2)
    assert not f2.meta["boundary_small"]


def test_n3_scaling_window(g1):
    # circle in R^3 with the radial potential: 2-d transverse grid at
    # coarse resolution; same order-2 residual structure
    g2 = solve_ground_state(P, 2)
    V = RadialCosinePotential()
    r_star = profile.find_stationary_circle(V, 0.0, P, 3)
    c = curves.circle(r_star, n=3, n_nodes=96)
    setup = HarnessSetup(curve=c, V=V, A=0.0, p=P, n=3, g=g2,
                         z_spacing=0.08, z_order=6, s_spacing=1.0)
    eps_list = [0.24, 0.17, 0.12]
    entries = [rh.run_entry(setup, e) for e in eps_list]
    slope = rh.scaling_fit(eps_list, [e.sup for e in entries])
    assert 1.7 < slope < 2.3
    proj_slope = rh.scaling_fit(eps_list, [e.proj_real_sup for e in entries])
    assert proj_slope > 2.5
