import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from curvenls import curves, profile, spectral
from curvenls.potentials import ConstantPotential, RadialCosinePotential
from curvenls.profile import SolvabilityError


def test_solve_h_zero_A():
    assert profile.solve_h(4.0, 0.0, 3, 2) == pytest.approx(2.0, abs=1e-14)


def test_solve_h_sigma_zero_closed_form():
    # n=3, p=3 gives sigma = 0 and h = sqrt(V + A^2)
    assert profile.solve_h(1.0, 0.5, 3, 3) == pytest.approx(np.sqrt(1.25), abs=1e-14)


def test_solve_h_quartic_oracle():
    # n=2, p=3: h^2 - A^2/h^2 = V, i.e. x^2 - V x - A^2 = 0 for x = h^2
    va, aa = 1.7, 0.3
    h = profile.solve_h(va, aa, 3, 2)
    x = np.roots([1.0, -va, -aa**2])
    oracle = np.sqrt(x[x > 0].real.max())
    assert abs(h - oracle) < 1e-12
    assert abs(h**2 - aa**2 / h**2 - va) < 1e-12


@settings(max_examples=60, deadline=None)
@given(p=st.floats(1.3, 5.0), vv=st.floats(0.2, 8.0), aa=st.floats(0.0, 0.4),
       n=st.integers(2, 3))
def test_solve_h_property(p, vv, aa, n):
    try:
        h = profile.solve_h(vv, aa, p, n)
    except SolvabilityError as exc:
        assert exc.critical_A is None or aa >= exc.critical_A * 0.999
        return
    sigma, _ = exponents = profile.exponents(p, n)[0], None
    sig = profile.exponents(p, n)[0]
    assert h > 0
    assert abs(h ** (p - 1) - aa**2 * h ** (2 * sig) - vv) < 1e-10 * max(vv, 1.0)


def test_solve_h_fold_detection():
    # the two-branch regime 2 sigma > p-1 needs (n-2)(p-1) > 4
    p, n = 6.0, 3
    a_crit = profile.critical_A(1.0, p, n)
    assert np.isfinite(a_crit)
    h = profile.solve_h(1.0, 0.5 * a_crit, p, n)   # below the fold: fine
    assert h > 0
    with pytest.raises(SolvabilityError) as exc:
        profile.solve_h(1.0, 1.5 * a_crit, p, n)
    assert exc.value.critical_A == pytest.approx(a_crit)


def test_h_sensitivity_identities():
    # the chain identities tying dh/dA, dh/dV and the exponents
    p, n, aa = 3.0, 2, 0.2
    sig, th = profile.exponents(p, n)
    for vv in (0.5, 1.0, 2.3):
        h = profile.solve_h(vv, aa, p, n)
        dhv, dha = profile.h_sensitivities(h, aa, p, n)
        lhs = aa * sig * h ** (sig - 1) * dha + h**sig
        rhs = (p - 1) * h ** (p - 1) / ((p - 1) * h**th - 2 * sig * aa**2 * h**sig)
        assert abs(lhs - rhs) < 1e-10 * abs(rhs)
        ratio = th * h ** (th - 1) * dha / lhs
        assert abs(ratio - 2 * aa * th / (p - 1)) < 1e-10


@pytest.fixture(scope="module")
def radial_setup():
    V = RadialCosinePotential()
    p, n, A = 3, 2, 0.1
    r_star = profile.find_stationary_circle(V, A, p, n)
    c = curves.circle(r_star, n_nodes=128)
    return V, p, n, A, r_star, c


def test_profile_fields_constant_potential():
    c = curves.circle(1.0, n_nodes=64)
    pf = profile.build_profile(c, ConstantPotential(2.0), 0.3, 3, 2)
    assert np.ptp(pf.h) < 1e-14
    assert np.ptp(pf.fprime) < 1e-14


def test_profile_fields_zero_A_zero_phase():
    c = curves.circle(1.5, n_nodes=64)
    pf = profile.build_profile(c, RadialCosinePotential(), 0.0, 3, 2)
    assert np.all(pf.fprime == 0.0)
    assert np.all(pf.f == 0.0)


def test_profile_nodewise_residuals(radial_setup):
    V, p, n, A, _, c = radial_setup
    pf = profile.build_profile(c, V, A, p, n)
    res = pf.nodewise_residuals()
    assert res["k_relation"] < 1e-12
    assert res["V_relation"] < 1e-12
    assert res["f_relation"] < 1e-12
    assert res["theta_identity"] == 0.0
    assert res["f_ode"] < 1e-10


def test_quantize_zero_target():
    c = curves.circle(1.0, n_nodes=64)
    q = profile.quantize_A(c, ConstantPotential(1.0), 0.1, 0.0, 3, 2)
    assert q["A"] == 0.0 and q["m"] == 0


def test_quantize_sigma_zero_closed_form():
    # n=3, p=3: sigma = 0 so the constraint is A L = 2 pi eps m
    c = curves.circle(1.0, n=3, n_nodes=64)
    eps, target = 0.1, 0.42
    q = profile.quantize_A(c, ConstantPotential(1.0), eps, target, 3, 3)
    expect_m = round(target * c.L / (2 * np.pi * eps))
    assert q["m"] == expect_m
    assert q["A"] == pytest.approx(2 * np.pi * eps * expect_m / c.L, abs=1e-12)
    assert q["defect"] < 1e-10


def test_quantize_generic_minimizes_distance(radial_setup):
    V, p, n, _, _, c = radial_setup
    eps, target = 0.05, 0.1
    q = profile.quantize_A(c, V, eps, target, p, n)
    assert q["defect"] < 1e-10
    psi = profile.quantization_integral(c, V, q["A"], p, n)
    assert abs(psi - 2 * np.pi * eps * q["m"]) < 1e-10
    # adjacent integers are no closer
    for m in (q["m"] - 1, q["m"] + 1):
        if m < 0:
            continue
        psi_t = 2 * np.pi * eps * m
        a_m = brentq(lambda a: profile.quantization_integral(c, V, a, p, n) - psi_t,
                     0.0, 1.0, xtol=1e-14) if m > 0 else 0.0
        assert abs(q["A"] - target) <= abs(a_m - target) + 1e-12


def test_reduced_energy_constant():
    c = curves.circle(0.5, n_nodes=64)   # L = pi
    V = ConstantPotential(4.0)           # h = 2 for p=3, A=0
    pf = profile.build_profile(c, V, 0.0, 3, 2)
    assert profile.reduced_energy(pf) == pytest.approx(8.0 * np.pi, rel=1e-12)


def test_reduced_energy_exponent_identity():
    # A=0: E = ∫ V^{theta/(p-1)}; for n=2 the exponent equals
    # (p+1)/(p-1) - 1/2, the circle-criticality weight
    p, n = 3, 2
    sig, th = profile.exponents(p, n)
    assert abs(th / (p - 1) - ((p + 1) / (p - 1) - 0.5)) < 1e-15
    V = RadialCosinePotential()
    c = curves.circle(1.2, n_nodes=64)
    pf = profile.build_profile(c, V, 0.0, p, n)
    e = profile.reduced_energy(pf)
    oracle = spectral.mean_integral(V.value(c.gamma) ** (th / (p - 1)), c.L)
    assert abs(e - oracle) < 1e-12 * abs(oracle)


def test_reduced_energy_grid_refinement(radial_setup):
    V, p, n, A, _, c = radial_setup
    e1 = profile.reduced_energy(profile.build_profile(c, V, A, p, n))
    c2 = c.resample(256)
    e2 = profile.reduced_energy(profile.build_profile(c2, V, A, p, n))
    assert abs(e1 - e2) / abs(e2) < 1e-10


def test_euler_residual_line_fixture():
    c = curves.line_fixture(n=2)
    rho = profile.euler_residual(c, ConstantPotential(1.0), 0.0, 3, 2)
    assert np.max(np.abs(rho)) == 0.0


def test_euler_residual_weighted_geodesic_form():
    # A=0 reduces to grad_N V - V H (p-1)/theta
    V = RadialCosinePotential()
    c = curves.circle(1.1, n_nodes=64)
    p, n = 3, 2
    rho = profile.euler_residual(c, V, 0.0, p, n)
    _, th = profile.exponents(p, n)
    _, gradn, _ = curves.potential_normal_data(V, c)
    vv = V.value(c.gamma)
    oracle = gradn - c.Hcomp * (vv * (p - 1) / th)[:, None]
    assert np.max(np.abs(rho - oracle)) < 1e-12


def test_stationary_circle(radial_setup):
    V, p, n, A, r_star, c = radial_setup
    assert 1.0 < r_star < 2.0
    rho = profile.euler_residual(c, V, A, p, n)
    assert np.max(np.abs(rho)) < 1e-8


def test_stationary_circle_criticality_oracle():
    # A=0: r* is a critical point of r V(r)^{3/2} for p=3, n=2
    V = RadialCosinePotential()
    r_star = profile.find_stationary_circle(V, 0.0, 3, 2)

    def crit(r):
        return (V.radial_value(r) ** 1.5
                + 1.5 * r * V.radial_value(r) ** 0.5 * V.radial_derivative(r))

    oracle = brentq(crit, 1.0, 2.0, xtol=1e-15)
    assert abs(r_star - oracle) < 1e-8
    assert 1.0 < r_star < 2.0


def test_stationary_circle_no_root_constant():
    with pytest.raises(SolvabilityError, match="no stationary circle"):
        profile.find_stationary_circle(
            _RadialConstant(), 0.0, 3, 2)


class _RadialConstant(ConstantPotential):
    def radial_value(self, r):
        return np.asarray(r * 0.0 + self.v0)

    def radial_derivative(self, r):
        return np.asarray(r * 0.0)


def test_stationary_radius_shift_quadratic_in_A():
    V = RadialCosinePotential()
    r0 = profile.find_stationary_circle(V, 0.0, 3, 2)
    a_list = np.array([0.025, 0.05, 0.1])
    shifts = np.array([
        abs(profile.find_stationary_circle(V, a, 3, 2) - r0) for a in a_list])
    slope = np.polyfit(np.log(a_list), np.log(shifts), 1)[0]
    assert 1.8 < slope < 2.2


def test_A_prime_zero_A(radial_setup):
    V, p, n, _, _, c = radial_setup
    sec = np.cos(2 * np.pi * c.sbar / c.L)[:, None] * c.frame[:, 0, :]
    assert profile.A_prime(c, V, 0.0, p, n, sec) == 0.0


def test_A_prime_fd_oracle(radial_setup):
    V, p, n, A, _, c = radial_setup
    rng = np.random.default_rng(3)
    th_ang = 2 * np.pi * c.sbar / c.L
    comp = 0.7 * np.cos(th_ang) + 0.3 * np.sin(2 * th_ang) + 0.1
    sec = comp[:, None] * c.frame[:, 0, :]
    ap = profile.A_prime(c, V, A, p, n, sec)
    cval = profile.quantization_integral(c, V, A, p, n)
    t = 1e-4
    _, a_p = profile.constrained_energy(c.gamma + t * sec, c.L, V, cval, A, p, n)
    _, a_m = profile.constrained_energy(c.gamma - t * sec, c.L, V, cval, A, p, n)
    fd = (a_p - a_m) / (2 * t)
    assert abs(ap - fd) / abs(fd) < 1e-6


def test_A_prime_constant_field_reduction():
    # constant V: the numerator integrand reduces to -h^sigma <S, H>, so a
    # constant normal field on a circle gives a closed form
    V = ConstantPotential(1.3)
    radius = 1.4
    c = curves.circle(radius, n_nodes=64)
    p, n, A = 3, 2, 0.2
    amp = 0.8
    sec = amp * c.frame[:, 0, :]
    ap = profile.A_prime(c, V, A, p, n, sec)
    sig = profile.exponents(p, n)[0]
    h0 = profile.solve_h(1.3, A, p, n)
    _, dha = profile.h_sensitivities(h0, A, p, n)
    # <S, H> = -amp/radius, numerator = -A * (-h^sig)(-amp/r) L
    closed = -A * (h0**sig * amp / radius) / (
        A * sig * h0 ** (sig - 1) * dha + h0**sig)
    assert abs(ap - closed) < 1e-12 * max(abs(closed), 1.0)


def test_first_variation_matches_fd(radial_setup):
    V, p, n, A, _, c = radial_setup
    c_off = curves.circle(1.8, n_nodes=128)   # away from stationarity
    th_ang = 2 * np.pi * c_off.sbar / c_off.L
    comp = np.cos(th_ang) + 0.4
    sec = comp[:, None] * c_off.frame[:, 0, :]
    fv = profile.first_variation(c_off, V, A, p, n, sec)
    cval = profile.quantization_integral(c_off, V, A, p, n)
    t = 1e-4
    e_p, _ = profile.constrained_energy(c_off.gamma + t * sec, c_off.L, V, cval, A, p, n)
    e_m, _ = profile.constrained_energy(c_off.gamma - t * sec, c_off.L, V, cval, A, p, n)
    fd = (e_p - e_m) / (2 * t)
    assert abs(fv - fd) / max(abs(fd), 1e-12) < 1e-6
