"""Second variation of the constrained curve energy: the quadratic form,
the nondegeneracy operator on periodic normal sections, its spectrum, and
the phase-correction equation.

Normal sections are stored as ambient (N, n) arrays constrained to the
normal space at each node; all derivatives are spectral along the curve
followed by normal projection, so nothing depends on the frame closing up
for n >= 3. The operator matrix acts on frame components (size
N(n-1) x N(n-1)) but is assembled through the ambient representation.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import spectral
from .curves import CurveModel
from .profile import A_prime, ProfileFields, SolvabilityError, build_profile


def _coefficients(pf: ProfileFields, A: float):
    sig, th, p = pf.sigma, pf.theta, pf.p
    h = pf.h
    c2 = h**th - 2 * A**2 * th / (p - 1) * h**sig
    hp = spectral.diff(h, pf.L)
    c2_drift = th * (h ** (th - 1) - 2 * A**2 * sig / (p - 1) * h ** (sig - 1)) * hp
    d2 = (p - 1) * h**th - 2 * sig * A**2 * h**sig
    bracket = (-(p - 1) * (3 + sig / th) * h ** (2 * th)
               - 16 * sig * th * A**4 / (p - 1) * h ** (2 * sig)
               + 2 * A**2 * (5 * sig + 3 * th) * h ** (th + sig)) / d2
    return c2, c2_drift, d2, bracket


def quadratic_form(c: CurveModel, V, A: float, p: float, n: int,
                   sec_v: np.ndarray, sec_w: np.ndarray) -> float:
    """Second variation of the constrained reduced energy at the curve.

    Both sections are ambient (N, n) arrays, normal to the curve. The
    formula is manifestly symmetric; the nonlocal piece couples the
    variations through the constraint multiplier A'.
    """
    pf = build_profile(c, V, A, p, n)
    sig, th = pf.sigma, pf.theta
    c2, _, _, _ = _coefficients(pf, A)
    dv = c.normal_project(spectral.diff(sec_v, c.L, axis=0))
    dw = c.normal_project(spectral.diff(sec_w, c.L, axis=0))
    term1 = spectral.mean_integral(c2 * np.sum(dv * dw, axis=1), c.L)

    grad = V.gradient(c.gamma)
    hess = V.hessian(c.gamma)
    g_v = np.sum(grad * sec_v, axis=1)
    g_w = np.sum(grad * sec_w, axis=1)
    h_v = np.sum(c.Hvec * sec_v, axis=1)
    h_w = np.sum(c.Hvec * sec_w, axis=1)
    hess_vw = np.einsum("ij,ijk,ik->i", sec_v, hess, sec_w)
    term2 = th / (p - 1) * spectral.mean_integral(
        (hess_vw - g_v * h_w - g_w * h_v) * pf.h ** (-sig), c.L)
    term3 = -sig * th / (p - 1) * spectral.mean_integral(
        pf.h ** (-sig - 1) * pf.dh_dV * g_v * g_w, c.L)

    if A == 0.0:
        term4 = 0.0
    else:
        ap_v = A_prime(c, V, A, p, n, sec_v)
        ap_w = A_prime(c, V, A, p, n, sec_w)
        denom = spectral.mean_integral(
            A * sig * pf.h ** (sig - 1) * pf.dh_dA + pf.h**sig, c.L)
        term4 = ap_v * ap_w * 2 * th / (p - 1) * denom
    return float(term1 + term2 + term3 + term4)


@dataclass(frozen=True)
class JacobiMatrix:
    """Discrete nondegeneracy operator on periodic normal sections.

    `local` holds the differential + multiplicative terms; the nonlocal
    constraint coupling is the rank-one update nl_col @ nl_row (zero for
    A = 0). Rows/columns are frame components, (node, direction) fastest
    on direction.
    """

    n_nodes: int
    n_dirs: int
    L: float
    local: np.ndarray
    nl_col: np.ndarray
    nl_row: np.ndarray
    weight_hk: np.ndarray = field(repr=False, default=None)

    @property
    def matrix(self) -> np.ndarray:
        return self.local + np.outer(self.nl_col, self.nl_row)

    def symmetry_diagnostics(self) -> dict:
        """Relative asymmetry of W @ J for W = Id and W = diag(h k)."""
        out = {}
        m = self.matrix
        for name, w in (("identity", None), ("hk", self.weight_hk)):
            wm = m if w is None else w[:, None] * m
            denom = np.linalg.norm(wm)
            out[name] = float(np.linalg.norm(wm - wm.T) / max(denom, 1e-300))
        return out


def _frame_basis_matrix(c: CurveModel) -> np.ndarray:
    """(N(n-1), Nn) map from frame components to stacked ambient values."""
    n_nodes, n_dirs = c.n_nodes, c.n - 1
    cmat = np.zeros((n_nodes * c.n, n_nodes * n_dirs))
    for i in range(n_nodes):
        cmat[i * c.n:(i + 1) * c.n, i * n_dirs:(i + 1) * n_dirs] = c.frame[i].T
    return cmat


def assemble_jacobi_from_fields(c: CurveModel, h: np.ndarray, A: float,
                                p: float, n: int,
                                hess_normal_amb: np.ndarray,
                                grad_normal_amb: np.ndarray,
                                dh_dV: np.ndarray,
                                dh_dA: np.ndarray,
                                holonomy_tol: float = 1e-6) -> JacobiMatrix:
    """Assemble the dense operator matrix in parallel-frame components.

    `hess_normal_amb` is (N, n, n) acting on ambient vectors (only its
    normal-normal block matters), `grad_normal_amb` the ambient normal
    gradient of the potential. This entry point also serves frozen-
    coefficient fixtures.

    Frame components of a smooth section are smooth and periodic only when
    the transported frame closes up, so a nonzero holonomy is rejected
    here (matrix-free application through `apply_jacobi` stays available
    for such curves). Routing the matrix through ambient storage instead
    would corrupt the top Fourier modes: the frame rotation shifts section
    frequencies by one, and the odd-derivative Nyquist convention then
    silently annihilates part of the highest mode, which shows up as a
    spurious eigenvalue in the middle of the spectrum.
    """
    if abs(c.holonomy_angle) > holonomy_tol:
        raise SolvabilityError(
            f"frame holonomy {c.holonomy_angle:.3e} prevents a periodic "
            "frame-component discretization; use apply_jacobi instead")
    sig = (n - 1) * (p - 1) / 2.0 - 2.0
    th = p + 1 - (p - 1) * (n - 1) / 2.0
    n_nodes, n_dirs = c.n_nodes, c.n - 1
    L = c.L

    c2 = h**th - 2 * A**2 * th / (p - 1) * h**sig
    hp = spectral.diff(h, L)
    drift = th * (h ** (th - 1) - 2 * A**2 * sig / (p - 1) * h ** (sig - 1)) * hp
    d2 = (p - 1) * h**th - 2 * sig * A**2 * h**sig
    bracket = (-(p - 1) * (3 + sig / th) * h ** (2 * th)
               - 16 * sig * th * A**4 / (p - 1) * h ** (2 * sig)
               + 2 * A**2 * (5 * sig + 3 * th) * h ** (th + sig)) / d2

    eye = np.eye(n_dirs)
    d1 = np.kron(spectral.diff_matrix(n_nodes, L, order=1), eye)
    d2mat = np.kron(spectral.diff_matrix(n_nodes, L, order=2), eye)

    def diag_scale(vals):
        return np.repeat(vals, n_dirs)

    local = (-diag_scale(c2)[:, None] * d2mat
             - diag_scale(drift)[:, None] * d1)

    hcomp = c.Hcomp
    hess_frame = np.einsum("ikj,ijl,iml->ikm", c.frame, hess_normal_amb, c.frame)
    for i in range(n_nodes):
        sl = slice(i * n_dirs, (i + 1) * n_dirs)
        local[sl, sl] += (th / (p - 1) * h[i] ** (-sig) * hess_frame[i]
                          + (c2[i] + bracket[i]) * np.outer(hcomp[i], hcomp[i]))

    # nonlocal rank-one part: column (A' response direction) x row (the A'
    # linear functional of the section). Sign pinned by the duality
    # ∫<J V, W> = Q(V, W), which in turn is validated against the
    # constraint-resolving finite-difference Hessian.
    if A == 0.0:
        nl_col = np.zeros(n_nodes * n_dirs)
        nl_row = np.zeros(n_nodes * n_dirs)
    else:
        gradn_frame = np.einsum("ij,ikj->ik", grad_normal_amb, c.frame)
        col = (2 * A * (th - sig) * h ** (p - 1) / d2)[:, None] * hcomp
        denom = spectral.mean_integral(
            A * sig * h ** (sig - 1) * dh_dA + h**sig, L)
        row = (-A / denom) * (
            (sig * h ** (sig - 1) * dh_dV)[:, None] * gradn_frame
            - (h**sig)[:, None] * hcomp) * (L / n_nodes)
        nl_col = col.reshape(-1)
        nl_row = row.reshape(-1)

    hk = h ** ((p + 1) / 2.0)     # h * k with k = h^{(p-1)/2}
    return JacobiMatrix(n_nodes=n_nodes, n_dirs=n_dirs, L=L, local=local,
                        nl_col=nl_col, nl_row=nl_row,
                        weight_hk=np.repeat(hk, n_dirs))


def assemble_jacobi(c: CurveModel, V, A: float, p: float, n: int,
                    n_nodes: int | None = None) -> JacobiMatrix:
    """Discretize the nondegeneracy operator at resolution n_nodes."""
    if n_nodes is not None and n_nodes != c.n_nodes:
        c = c.resample(n_nodes)
    pf = build_profile(c, V, A, p, n)
    hess = V.hessian(c.gamma)
    grad = V.gradient(c.gamma)
    gradn = grad - np.sum(grad * c.tangent, axis=1, keepdims=True) * c.tangent
    return assemble_jacobi_from_fields(c, pf.h, A, p, n, hess, gradn,
                                       pf.dh_dV, pf.dh_dA)


def apply_jacobi(c: CurveModel, V, A: float, p: float, n: int,
                 section: np.ndarray) -> np.ndarray:
    """Matrix-free application of the operator to an ambient section."""
    pf = build_profile(c, V, A, p, n)
    sig, th, p_ = pf.sigma, pf.theta, pf.p
    c2, drift, d2, bracket = _coefficients(pf, A)
    ds = c.normal_project(spectral.diff(section, c.L, axis=0))
    dds = c.normal_project(spectral.diff(ds, c.L, axis=0))
    hess = V.hessian(c.gamma)
    hess_s = c.normal_project(np.einsum("ijk,ik->ij", hess, section))
    h_s = np.sum(c.Hvec * section, axis=1)
    out = (-c2[:, None] * dds - drift[:, None] * ds
           + (th / (p_ - 1)) * (pf.h ** (-sig))[:, None] * hess_s
           + ((c2 + bracket) * h_s)[:, None] * c.Hvec)
    if A != 0.0:
        ap = A_prime(c, V, A, p, n, section)
        out = out + (2 * A * ap * (th - sig) * pf.h ** (p_ - 1) / d2)[:, None] * c.Hvec
    return out


def pair_sections(c: CurveModel, field_a: np.ndarray, field_b: np.ndarray) -> float:
    """L^2 pairing ∫ <a, b> dsbar on the curve grid."""
    return float(spectral.mean_integral(np.sum(field_a * field_b, axis=1), c.L))


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray       # sorted by |lambda|, complex
    min_abs: float
    operator_norm: float
    invertible: bool
    gap: float
    symmetry: dict

    def as_dict(self) -> dict:
        return {
            "min_abs_eig": self.min_abs,
            "operator_norm": self.operator_norm,
            "invertible": bool(self.invertible),
            "gap": self.gap,
            "symmetry_identity": self.symmetry["identity"],
            "symmetry_hk": self.symmetry["hk"],
        }


def spectrum(jm: JacobiMatrix, tol: float = 1e-8) -> SpectrumReport:
    """Dense eigendecomposition with an invertibility verdict."""
    m = jm.matrix
    eigs = scipy.linalg.eigvals(m)
    order = np.argsort(np.abs(eigs))
    eigs = eigs[order]
    norm = float(np.linalg.norm(m, 2))
    min_abs = float(np.abs(eigs[0]))
    gap = float(np.abs(eigs[1]) - min_abs) if eigs.size > 1 else np.inf
    return SpectrumReport(eigenvalues=eigs, min_abs=min_abs,
                          operator_norm=norm,
                          invertible=min_abs > tol * max(norm, 1e-300),
                          gap=gap, symmetry=jm.symmetry_diagnostics())


# ---------------------------------------------------------------------------
# Phase correction f1 and its defining divergence-form equation

@dataclass(frozen=True)
class F1Solution:
    fprime1: np.ndarray
    c_constant: float          # mean-zero constant; coincides with A'(Phi)
    T_residual: float
    sbar: np.ndarray
    L: float


def t_equation_coefficient(pf: ProfileFields) -> np.ndarray:
    """G(sbar) with (T f)(sbar) = d/dsbar (G f'). Equals the reciprocal of
    A sigma h^{sigma-1} dh/dA + h^sigma."""
    p, n, sig = pf.p, pf.n, pf.sigma
    k_pow = pf.h ** ((p - 1) * (n + 1) / 2.0)      # k^{n+1}
    num = pf.h**2 * ((p - 1) * pf.h ** (p - 1)
                     - 2 * sig * pf.A**2 * pf.h ** (2 * sig))
    return num / ((p - 1) * k_pow)


def solve_f1(c: CurveModel, V, A: float, p: float, n: int,
             phi: np.ndarray) -> F1Solution:
    """Phase correction from the divergence-form equation

        d/dsbar(G f1') = 2A ((p-1)/(2 theta) - 1) d/dsbar <H, Phi>,

    with the additive constant fixed by ∫ f1' = 0 (periodicity of f1).
    """
    pf = build_profile(c, V, A, p, n)
    sig, th = pf.sigma, pf.theta
    d2 = (p - 1) * pf.h**th - 2 * sig * A**2 * pf.h**sig
    if np.any(d2 <= 0):
        raise SolvabilityError(
            "phase-equation coefficient changes sign (A outside the "
            "small-constant regime)")
    g_coef = t_equation_coefficient(pf)
    h_phi = np.sum(c.Hvec * np.asarray(phi, dtype=float), axis=1)
    base = 2 * A * ((p - 1) / (2 * th) - 1.0) * h_phi / g_coef
    inv_mean = spectral.mean_integral(1.0 / g_coef, c.L)
    c_const = -spectral.mean_integral(base, c.L) / inv_mean
    fp1 = base + c_const / g_coef

    rhs = 2 * A * ((p - 1) / (2 * th) - 1.0) * spectral.diff(h_phi, c.L)
    lhs = spectral.diff(g_coef * fp1, c.L)
    t_res = float(np.max(np.abs(lhs - rhs)))
    return F1Solution(fprime1=fp1, c_constant=float(c_const),
                      T_residual=t_res, sbar=c.sbar, L=c.L)


def solve_next_order(c: CurveModel, V, A: float, p: float, n: int,
                     w31: np.ndarray, w32: np.ndarray) -> dict:
    """Structural hook for the next-order (f2, Phi1) system.

    Solves J Phi1 = W32 (dense solve on frame components) and then the
    divergence-form phase equation T f2 = 2A((p-1)/(2 theta)-1)
    d/dsbar<H, Phi1> + W31. W31 must have zero mean (total-derivative
    right-hand side); raises otherwise.
    """
    pf = build_profile(c, V, A, p, n)
    if abs(spectral.mean_integral(w31, c.L)) > 1e-10 * max(
            1.0, float(np.max(np.abs(w31)))):
        raise SolvabilityError("W31 must integrate to zero over the loop")
    jm = assemble_jacobi(c, V, A, p, n)
    rep = spectrum(jm)
    if not rep.invertible:
        raise SolvabilityError("nondegeneracy operator is numerically singular")
    cmat = _frame_basis_matrix(c)
    rhs = cmat.T @ np.asarray(w32, dtype=float).reshape(-1)
    phi1_comp = np.linalg.solve(jm.matrix, rhs)
    phi1 = (cmat @ phi1_comp).reshape(c.n_nodes, c.n)

    sig, th = pf.sigma, pf.theta
    g_coef = t_equation_coefficient(pf)
    h_phi = np.sum(c.Hvec * phi1, axis=1)
    total_rhs = (2 * A * ((p - 1) / (2 * th) - 1.0) * spectral.diff(h_phi, c.L)
                 + np.asarray(w31, dtype=float))
    anti = spectral.antiderivative(total_rhs, c.L)
    base = anti / g_coef
    inv_mean = spectral.mean_integral(1.0 / g_coef, c.L)
    c_const = -spectral.mean_integral(base, c.L) / inv_mean
    f2p = base + c_const / g_coef
    return {"phi1": phi1, "f2_prime": f2p, "c_constant": float(c_const)}
