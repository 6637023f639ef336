"""Pointwise profile relations along the curve, phase quantization, the
reduced curve energy with its Euler condition, and the nonlocal constant
A' produced by normal variations under the loop constraint.

Conventions (d = n-1 normal dimensions):
    sigma = (n-1)(p-1)/2 - 2,   theta = p + 1 - (p-1)(n-1)/2 = p - sigma - 1
    k^2 = h^{p-1},  V + f'^2 = h^{p-1},  f' = A h^sigma
    h solves  h^{p-1} - A^2 h^{2 sigma} = V  (smallest positive root)
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import spectral
from .curves import CurveModel, circle, potential_normal_data


class SolvabilityError(Exception):
    """The pointwise h-equation (or the quantization) has no admissible root."""

    def __init__(self, msg, critical_A=None, sbar=None):
        super().__init__(msg)
        self.critical_A = critical_A
        self.sbar = sbar


def exponents(p: float, n: int) -> tuple[float, float]:
    sigma = (n - 1) * (p - 1) / 2.0 - 2.0
    theta = p + 1 - (p - 1) * (n - 1) / 2.0
    return sigma, theta


def _g_of_h(h, A, p, sigma):
    return h ** (p - 1) - A**2 * h ** (2 * sigma)


def _gprime_of_h(h, A, p, sigma):
    return (p - 1) * h ** (p - 2) - 2 * sigma * A**2 * h ** (2 * sigma - 1)


def critical_A(V_val: float, p: float, n: int) -> float:
    """Fold location: largest A for which the h-equation still has a root.

    Finite only in the regime 2*sigma > p-1; +inf below it, 1 at equality.
    """
    sigma, _ = exponents(p, n)
    if 2 * sigma < p - 1:
        return np.inf
    if 2 * sigma == p - 1:
        return 1.0
    hfold = (V_val / (1.0 - (p - 1) / (2 * sigma))) ** (1.0 / (p - 1))
    return np.sqrt((p - 1) / (2 * sigma)) * hfold ** ((p - 1 - 2 * sigma) / 2.0)


def solve_h(V_val: float, A: float, p: float, n: int) -> float:
    """Smallest positive root of h^{p-1} - A^2 h^{2 sigma} = V."""
    if V_val <= 0:
        raise SolvabilityError(f"potential value must be positive, got {V_val}")
    if A < 0:
        raise SolvabilityError("phase constant A must be nonnegative")
    sigma, _ = exponents(p, n)
    if A == 0.0:
        return V_val ** (1.0 / (p - 1))
    if sigma == 0.0:
        return (V_val + A**2) ** (1.0 / (p - 1))

    if 2 * sigma >= p - 1:
        a_crit = critical_A(V_val, p, n)
        if A >= a_crit:
            raise SolvabilityError(
                f"no root: A={A} at or beyond the fold (critical A ~ {a_crit:.6g})",
                critical_A=a_crit)
        if 2 * sigma == p - 1:
            return (V_val / (1.0 - A**2)) ** (1.0 / (p - 1))
        # g rises on (0, h*) then falls; the smallest root sits left of h*
        h_star = ((p - 1) / (2 * sigma * A**2)) ** (1.0 / (2 * sigma - (p - 1)))
        lo = h_star
        while _g_of_h(lo, A, p, sigma) > V_val:
            lo *= 0.5
            if lo < 1e-300:
                raise SolvabilityError("bracketing failed for the h-equation")
        root = brentq(lambda h: _g_of_h(h, A, p, sigma) - V_val, lo, h_star,
                      xtol=1e-15, rtol=8.9e-16)
    else:
        hi = max(V_val ** (1.0 / (p - 1)), 1.0)
        while _g_of_h(hi, A, p, sigma) < V_val:
            hi *= 2.0
            if hi > 1e300:
                raise SolvabilityError("bracketing failed for the h-equation")
        lo = hi
        while _g_of_h(lo, A, p, sigma) > V_val:
            lo *= 0.5
            if lo < 1e-300:
                raise SolvabilityError("bracketing failed for the h-equation")
        root = brentq(lambda h: _g_of_h(h, A, p, sigma) - V_val, lo, hi,
                      xtol=1e-15, rtol=8.9e-16)

    for _ in range(3):   # Newton polish
        f = _g_of_h(root, A, p, sigma) - V_val
        df = _gprime_of_h(root, A, p, sigma)
        if df == 0.0:
            break
        root -= f / df
    return float(root)


def h_sensitivities(h, A, p, n):
    """(dh/dV, dh/dA) from implicit differentiation of the h-equation."""
    sigma, _ = exponents(p, n)
    dh_dv = 1.0 / ((p - 1) * h ** (p - 2) - 2 * sigma * A**2 * h ** (2 * sigma - 1))
    dh_da = 2.0 * A * h ** (2 * sigma) * dh_dv
    return dh_dv, dh_da


@dataclass(frozen=True)
class ProfileFields:
    p: float
    n: int
    A: float
    sigma: float
    theta: float
    sbar: np.ndarray
    V: np.ndarray
    h: np.ndarray
    k: np.ndarray
    fprime: np.ndarray
    f: np.ndarray          # cumulative integral of fprime, f(0) = 0
    dh_dV: np.ndarray
    dh_dA: np.ndarray
    L: float

    def nodewise_residuals(self) -> dict:
        """Pointwise defects of the defining relations (all should vanish)."""
        scale = np.maximum(self.h ** (self.p - 1), 1e-300)
        r_k = np.abs(self.k**2 - self.h ** (self.p - 1)) / scale
        r_v = np.abs(self.V + self.fprime**2 - self.h ** (self.p - 1)) / scale
        r_f = np.abs(self.fprime - self.A * self.h**self.sigma) / np.maximum(
            np.abs(self.fprime), 1.0)
        hp = spectral.diff(self.h, self.L)
        kp = spectral.diff(self.k, self.L)
        fpp = spectral.diff(self.fprime, self.L)
        ode = (fpp * self.h + 2 * self.fprime * hp
               - (self.n - 1) * self.fprime * self.h * kp / self.k)
        return {
            "k_relation": float(np.max(r_k)),
            "V_relation": float(np.max(r_v)),
            "f_relation": float(np.max(r_f)),
            "theta_identity": abs(self.theta - (self.p - self.sigma - 1)),
            "f_ode": float(np.max(np.abs(ode))),
        }


def _profile_on_values(v_vals: np.ndarray, sbar: np.ndarray, L: float,
                       A: float, p: float, n: int) -> ProfileFields:
    sigma, theta = exponents(p, n)
    h = np.empty_like(v_vals)
    for i, v in enumerate(v_vals):
        try:
            h[i] = solve_h(v, A, p, n)
        except SolvabilityError as exc:
            raise SolvabilityError(
                f"h-equation unsolvable at sbar={sbar[i]:.6g}: {exc}",
                critical_A=exc.critical_A, sbar=float(sbar[i])) from exc
    k = h ** ((p - 1) / 2.0)
    fprime = A * h**sigma
    f = spectral.antiderivative(fprime, L)
    dh_dv, dh_da = h_sensitivities(h, A, p, n)
    return ProfileFields(p=p, n=n, A=A, sigma=sigma, theta=theta, sbar=sbar,
                         V=v_vals, h=h, k=k, fprime=fprime, f=f,
                         dh_dV=dh_dv, dh_dA=dh_da, L=L)


def build_profile(c: CurveModel, V, A: float, p: float, n: int) -> ProfileFields:
    """Solve the pointwise relations along the curve."""
    v_vals = V.value(c.gamma)
    if np.any(v_vals <= 0):
        raise SolvabilityError("potential not positive along the curve")
    return _profile_on_values(v_vals, c.sbar, c.L, A, p, n)


profile_fields = build_profile


def quantization_integral(c: CurveModel, V, A: float, p: float, n: int) -> float:
    """Psi(A) = ∫ A h^sigma dsbar over one loop."""
    pf = build_profile(c, V, A, p, n)
    return float(spectral.mean_integral(pf.fprime, c.L))


def quantize_A(c: CurveModel, V, eps: float, A_target: float,
               p: float, n: int) -> dict:
    """Nearest A >= 0 to A_target with ∫ A h^sigma = 2 pi eps m, m integer.

    Exploits strict monotonicity of A -> A h^sigma below the fold; scans the
    adjacent integers and keeps the one minimizing |A - A_target| (ties go
    to the smaller m).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if A_target < 0:
        raise SolvabilityError("A_target must be nonnegative")
    psi_target = quantization_integral(c, V, A_target, p, n) if A_target > 0 else 0.0
    m_guess = int(np.round(psi_target / (2 * np.pi * eps)))
    candidates = sorted({max(m_guess - 1, 0), m_guess, m_guess + 1})

    def psi(a):
        return quantization_integral(c, V, a, p, n)

    best = None
    for m in candidates:
        target = 2 * np.pi * eps * m
        if m == 0:
            a_m = 0.0
        else:
            hi = max(A_target, 1e-6)
            tries = 0
            while psi(hi) < target:
                hi *= 2.0
                tries += 1
                if tries > 60:
                    raise SolvabilityError(
                        "quantization target unreachable (monotone range exceeded)")
            a_m = brentq(lambda a: psi(a) - target, 0.0, hi,
                         xtol=1e-15, rtol=8.9e-16)
        defect = abs(psi(a_m) - target) if m else 0.0
        cand = {"A": float(a_m), "m": m, "defect": float(defect)}
        if best is None or abs(cand["A"] - A_target) < abs(best["A"] - A_target) - 1e-18:
            best = cand
    return best


def reduced_energy(pf: ProfileFields) -> float:
    """∫ h^theta dsbar (the eps- and profile-independent prefactor is
    reported separately by the ground-state module)."""
    return float(spectral.mean_integral(pf.h**pf.theta, pf.L))


def euler_gap(pf: ProfileFields) -> np.ndarray:
    """(p-1)/theta h^{p-1} - 2 A^2 h^{2 sigma}: multiplies H in the Euler
    equation."""
    return ((pf.p - 1) / pf.theta * pf.h ** (pf.p - 1)
            - 2 * pf.A**2 * pf.h ** (2 * pf.sigma))


def euler_residual(c: CurveModel, V, A: float, p: float, n: int) -> np.ndarray:
    """rho = grad_N V - H ((p-1)/theta h^{p-1} - 2 A^2 h^{2 sigma}),
    frame components per node; gamma is stationary iff rho vanishes."""
    pf = build_profile(c, V, A, p, n)
    _, gradn, _ = potential_normal_data(V, c)
    return gradn - c.Hcomp * euler_gap(pf)[:, None]


def stationarity_function(r: float, V, A: float, p: float, n: int) -> float:
    """Scalar Euler condition for a circle of radius r in a radial potential:
    V'(r) + (1/r) ((p-1)/theta h^{p-1} - 2 A^2 h^{2 sigma})."""
    sigma, theta = exponents(p, n)
    h = solve_h(V.radial_value(r), A, p, n)
    gap = (p - 1) / theta * h ** (p - 1) - 2 * A**2 * h ** (2 * sigma)
    return V.radial_derivative(r) + gap / r


def find_stationary_circle(V, A: float, p: float, n: int,
                           bracket=(0.5, 6.0), n_scan: int = 60) -> float:
    """Radius r* of a stationary circle for a radial potential.

    Scans the bracket for a sign change and polishes with brentq; raises
    SolvabilityError when no sign change is present.
    """
    rs = np.linspace(bracket[0], bracket[1], n_scan)
    vals = np.array([stationarity_function(r, V, A, p, n) for r in rs])
    sign_flip = np.where(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if sign_flip.size == 0:
        raise SolvabilityError(
            f"no stationary circle in radius bracket {bracket}")
    i = sign_flip[0]
    r_star = brentq(lambda r: stationarity_function(r, V, A, p, n),
                    rs[i], rs[i + 1], xtol=1e-15, rtol=8.9e-16)
    return float(r_star)


def A_prime(c: CurveModel, V, A: float, p: float, n: int,
            section: np.ndarray) -> float:
    """Derivative of the quantization constant along a normal variation.

    A' = -A * ∫ (sigma h^{sigma-1} dh/dV <grad_N V, S> - h^sigma <S, H>)
         / ∫ (A sigma h^{sigma-1} dh/dA + h^sigma)
    with S the (ambient, normal) section.
    """
    pf = build_profile(c, V, A, p, n)
    sec = np.asarray(section, dtype=float)
    grad = V.gradient(c.gamma)
    gv = np.sum(grad * sec, axis=1)          # normal section: = <grad_N V, S>
    hv = np.sum(c.Hvec * sec, axis=1)
    sigma = pf.sigma
    num = spectral.mean_integral(
        sigma * pf.h ** (sigma - 1) * pf.dh_dV * gv - pf.h**sigma * hv, c.L)
    den = spectral.mean_integral(
        A * sigma * pf.h ** (sigma - 1) * pf.dh_dA + pf.h**sigma, c.L)
    if abs(den) < 1e-12:
        raise SolvabilityError("degenerate quantization denominator")
    return float(-A * num / den)


# ---------------------------------------------------------------------------
# Constraint-resolved energy of a perturbed curve: the finite-difference
# oracle used to validate A_prime and the variation formulas.

def constrained_energy(gamma_pts: np.ndarray, L_ref: float, V,
                       constraint_value: float, A_guess: float,
                       p: float, n: int) -> tuple[float, float]:
    """(energy, A) of a perturbed closed curve under the loop constraint.

    The curve is given by points gamma(sbar_i) on the reference uniform
    grid; sbar need not be arclength after perturbation, so integrals carry
    the measure |gamma'(sbar)| dsbar. A is re-solved so that
    ∫ A h^sigma |gamma'| dsbar keeps the constraint value.
    """
    sigma, theta = exponents(p, n)
    speed = np.linalg.norm(spectral.diff(gamma_pts, L_ref, axis=0), axis=1)
    v_vals = V.value(gamma_pts)

    def h_of(a):
        return np.array([solve_h(v, a, p, n) for v in v_vals])

    def psi(a):
        return float(spectral.mean_integral(a * h_of(a)**sigma * speed, L_ref))

    if constraint_value == 0.0:
        a_t = 0.0
    else:
        lo, hi = 0.0, max(2 * A_guess, 1e-6)
        tries = 0
        while psi(hi) < constraint_value:
            hi *= 2.0
            tries += 1
            if tries > 60:
                raise SolvabilityError("constraint unreachable on perturbed curve")
        a_t = brentq(lambda a: psi(a) - constraint_value, lo, hi,
                     xtol=1e-15, rtol=8.9e-16)
    energy = float(spectral.mean_integral(h_of(a_t)**theta * speed, L_ref))
    return energy, a_t


def first_variation(c: CurveModel, V, A: float, p: float, n: int,
                    section: np.ndarray) -> float:
    """dE/dt along a normal section (the display preceding the Euler
    equation): ∫ (theta/(p-1)) h^{-sigma} [<grad_N V, S> - <S, H> * gap]."""
    pf = build_profile(c, V, A, p, n)
    sec = np.asarray(section, dtype=float)
    grad = V.gradient(c.gamma)
    gv = np.sum(grad * sec, axis=1)
    hv = np.sum(c.Hvec * sec, axis=1)
    integrand = (pf.theta / (pf.p - 1)) * pf.h ** (-pf.sigma) * (
        gv - hv * euler_gap(pf))
    return float(spectral.mean_integral(integrand, c.L))


def stationary_circle_model(V, A: float, p: float, n: int,
                            n_nodes: int = 256, bracket=(0.5, 6.0)) -> tuple:
    """(CurveModel, r*) for the stationary circle of a radial potential."""
    r_star = find_stationary_circle(V, A, p, n, bracket=bracket)
    return circle(r_star, n=n, n_nodes=n_nodes), r_star
