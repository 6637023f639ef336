"""Scenario configuration (TOML) and the batch pipeline.

A scenario bundles the model parameters, curve and potential presets,
grid resolutions and the eps sweep. `run_scenario` executes the stages
ground-state -> profile -> euler -> jacobi -> (f1) -> residual, writing
delimited artifacts plus a manifest with pass/fail verdicts.
"""

import hashlib
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import curves, jacobi, profile, residual as rh, spectral
from .ground_state import energy_prefactor, moments, pohozaev_report, solve_ground_state
from .potentials import make_potential
from .profile import SolvabilityError


class ConfigError(Exception):
    pass


_KNOWN_CURVES = ("circle", "ellipse", "torus-knot", "samples-csv")
_KNOWN_POTENTIALS = ("constant", "radial-cosine", "quadratic")


@dataclass
class ScenarioConfig:
    p: float
    n: int
    A_target: float
    curve: dict
    potential: dict
    n_nodes: int = 128
    z_spacing: float = 0.04
    z_order: int = 4
    s_spacing: float = 0.35
    r_max: float | None = None
    tube_radius: float | None = None
    eps_list: tuple = (0.2, 0.1, 0.05)
    eps_mode: str = "fixed"            # 'fixed' | 'quantized'
    ablations: bool = True
    phi: dict = dc_field(default_factory=dict)
    output_dir: str = "out"
    seed: int = 1234
    config_hash: str = ""

    def validate(self):
        if not self.p > 1:
            raise ConfigError(f"exponent p must exceed 1, got p={self.p}")
        if self.n not in (2, 3):
            raise ConfigError(f"ambient dimension n must be 2 or 3, got {self.n}")
        if self.A_target < 0:
            raise ConfigError("A_target must be nonnegative")
        for name, val in (("n_nodes", self.n_nodes),
                          ("z_spacing", self.z_spacing),
                          ("s_spacing", self.s_spacing)):
            if val <= 0:
                raise ConfigError(f"resolution '{name}' must be positive")
        preset = self.curve.get("preset")
        if preset not in _KNOWN_CURVES:
            raise ConfigError(
                f"unknown curve preset '{preset}'; known: {list(_KNOWN_CURVES)}")
        vpreset = self.potential.get("preset")
        if vpreset not in _KNOWN_POTENTIALS:
            raise ConfigError(
                f"unknown potential preset '{vpreset}'; "
                f"known: {list(_KNOWN_POTENTIALS)}")
        if self.eps_mode not in ("fixed", "quantized"):
            raise ConfigError("eps_mode must be 'fixed' or 'quantized'")
        if any(e <= 0 for e in self.eps_list):
            raise ConfigError("eps values must be positive")
        if self.A_target > 0 and self.eps_mode != "quantized":
            raise ConfigError(
                "A_target > 0 requires eps_mode = 'quantized': a fixed phase "
                "constant only closes up on the eps ladder Psi/(2 pi m)")
        return self


def load_config(path) -> ScenarioConfig:
    raw_bytes = Path(path).read_bytes()
    raw = tomllib.loads(raw_bytes.decode())
    model = raw.get("model", {})
    grids = raw.get("grids", {})
    sweep = raw.get("sweep", {})
    output = raw.get("output", {})
    cfg = ScenarioConfig(
        p=float(model.get("p", 3.0)),
        n=int(model.get("n", 2)),
        A_target=float(model.get("A_target", 0.0)),
        curve=dict(raw.get("curve", {})),
        potential=dict(raw.get("potential", {})),
        n_nodes=int(grids.get("n_nodes", 128)),
        z_spacing=float(grids.get("z_spacing", 0.04)),
        z_order=int(grids.get("z_order", 4)),
        s_spacing=float(grids.get("s_spacing", 0.35)),
        r_max=grids.get("r_max"),
        tube_radius=grids.get("tube_radius"),
        eps_list=tuple(float(e) for e in sweep.get("eps", (0.2, 0.1, 0.05))),
        eps_mode=str(sweep.get("eps_mode", "fixed")),
        ablations=bool(sweep.get("ablations", True)),
        phi=dict(raw.get("phi", {})),
        output_dir=str(output.get("directory", "out")),
        seed=int(output.get("seed", 1234)),
        config_hash=hashlib.sha256(raw_bytes).hexdigest(),
    )
    return cfg.validate()


@dataclass
class ScenarioContext:
    cfg: ScenarioConfig
    g: object = None
    mom: object = None
    V: object = None
    curve: object = None
    r_star: float | None = None
    A: float | None = None
    quantization: dict | None = None
    pf: object = None
    checks: dict = dc_field(default_factory=dict)


def build_context(cfg: ScenarioConfig) -> ScenarioContext:
    ctx = ScenarioContext(cfg=cfg)
    ctx.V = make_potential(cfg.potential["preset"], cfg.n,
                           **{k: v for k, v in cfg.potential.items()
                              if k != "preset"})
    kwargs = {k: v for k, v in cfg.curve.items()
              if k not in ("preset", "radius")}
    preset = cfg.curve["preset"]
    radius = cfg.curve.get("radius", 1.0)
    if preset == "circle" and radius == "stationary":
        ctx.r_star = profile.find_stationary_circle(
            ctx.V, cfg.A_target, cfg.p, cfg.n)
        ctx.curve = curves.circle(ctx.r_star, n=cfg.n, n_nodes=cfg.n_nodes)
    elif preset == "circle":
        ctx.curve = curves.circle(float(radius), n=cfg.n,
                                  n_nodes=cfg.n_nodes, **kwargs)
    else:
        ctx.curve = curves.make_curve(preset, cfg.n, n_nodes=cfg.n_nodes,
                                      **kwargs)
    return ctx


# ---------------------------------------------------------------------------
# Stages. Each returns a JSON-ready dict and records pass/fail checks.

def stage_ground_state(ctx: ScenarioContext) -> dict:
    cfg = ctx.cfg
    ctx.g = solve_ground_state(cfg.p, cfg.n - 1, r_max=cfg.r_max)
    ctx.mom = moments(ctx.g)
    rep = pohozaev_report(ctx.mom)
    ode_res = ctx.g.ode_residual()
    ctx.checks["ground_state_ode_residual"] = bool(ode_res < 1e-8)
    ctx.checks["pohozaev_identities"] = bool(rep["max_residual"] < 1e-6)
    return {
        "p": cfg.p, "d": cfg.n - 1, "U0": float(ctx.g.U[0]),
        "r_max": ctx.g.r_max, "decay_rate": ctx.g.decay_rate,
        "ode_residual": ode_res,
        "moments": ctx.mom.as_dict(),
        "pohozaev": rep,
    }


def stage_profile(ctx: ScenarioContext) -> dict:
    cfg = ctx.cfg
    eps0 = cfg.eps_list[0]
    if cfg.A_target > 0:
        # quantized eps mode: A stays at its target and the sweep snaps
        # eps onto the ladder Psi(A)/(2 pi m); the defect at the snapped
        # eps0 is reported
        ctx.A = cfg.A_target
        psi_val = profile.quantization_integral(
            ctx.curve, ctx.V, ctx.A, cfg.p, cfg.n)
        m0 = max(int(np.round(psi_val / (2 * np.pi * eps0))), 1)
        eps_snap = psi_val / (2 * np.pi * m0)
        q = {"A": ctx.A, "m": m0,
             "defect": abs(psi_val - 2 * np.pi * eps_snap * m0)}
    else:
        q = profile.quantize_A(ctx.curve, ctx.V, eps0, cfg.A_target,
                               cfg.p, cfg.n)
        ctx.A = q["A"]
    ctx.quantization = q
    ctx.pf = profile.build_profile(ctx.curve, ctx.V, ctx.A, cfg.p, cfg.n)
    res = ctx.pf.nodewise_residuals()
    energy = profile.reduced_energy(ctx.pf)
    ctx.checks["profile_relations"] = bool(
        max(res["k_relation"], res["V_relation"], res["f_relation"]) < 1e-10)
    ctx.checks["profile_f_ode"] = bool(res["f_ode"] < 1e-8)
    ctx.checks["quantization_defect"] = bool(q["defect"] < 1e-10)
    return {
        "A_target": cfg.A_target, "A": ctx.A, "m": q["m"],
        "quantization_defect": q["defect"],
        "nodewise_residuals": res,
        "reduced_energy": energy,
        "energy_prefactor_eps0": energy_prefactor(ctx.mom, eps0)
        if ctx.mom else None,
    }


def stage_euler(ctx: ScenarioContext) -> dict:
    cfg = ctx.cfg
    rho = profile.euler_residual(ctx.curve, ctx.V, ctx.A, cfg.p, cfg.n)
    sup = float(np.max(np.abs(rho)))
    ctx.checks["euler_stationarity"] = bool(sup < 1e-8)
    out = {"euler_residual_sup": sup, "r_star": ctx.r_star}
    if ctx.r_star is not None:
        out["stationarity_value"] = profile.stationarity_function(
            ctx.r_star, ctx.V, ctx.A, cfg.p, cfg.n)
    return out


def stage_jacobi(ctx: ScenarioContext) -> dict:
    cfg = ctx.cfg
    jm = jacobi.assemble_jacobi(ctx.curve, ctx.V, ctx.A, cfg.p, cfg.n)
    rep = jacobi.spectrum(jm)
    rng = np.random.default_rng(cfg.seed)
    th = 2 * np.pi * ctx.curve.sbar / ctx.curve.L
    defects = []
    for _ in range(3):
        coef = rng.normal(size=(2, 2, 5))
        secs = []
        for s in range(2):
            comp = np.zeros((ctx.curve.n_nodes, cfg.n - 1))
            for m in range(cfg.n - 1):
                comp[:, m] = coef[s, 0, 0]
                for j in range(1, 3):
                    comp[:, m] += (coef[s, 0, j] * np.cos(j * th)
                                   + coef[s, 1, j] * np.sin(j * th))
            secs.append(np.einsum("ik,ikj->ij", comp, ctx.curve.frame))
        q = jacobi.quadratic_form(ctx.curve, ctx.V, ctx.A, cfg.p, cfg.n, *secs)
        v_comp = np.einsum("ij,ikj->ik", secs[0], ctx.curve.frame).reshape(-1)
        w_comp = np.einsum("ij,ikj->ik", secs[1], ctx.curve.frame).reshape(-1)
        dual = float(w_comp @ (jm.matrix @ v_comp)) * ctx.curve.L / ctx.curve.n_nodes
        defects.append(abs(q - dual) / max(abs(q), 1.0))
    duality = float(np.max(defects))
    ctx.checks["jacobi_duality"] = bool(duality < 1e-6)
    ctx.checks["jacobi_invertible"] = bool(rep.invertible)
    out = rep.as_dict()
    out["duality_defect"] = duality
    out["eigenvalues_real"] = [float(x) for x in
                               np.sort(rep.eigenvalues.real)[:20]]
    ctx.jacobi_eigs = rep.eigenvalues
    return out


def _phi_components(ctx: ScenarioContext):
    cfg = ctx.cfg
    mode = cfg.phi.get("mode")
    if mode is None:
        return None
    amp = float(cfg.phi.get("amplitude", 1.0))
    wavenumber = int(cfg.phi.get("wavenumber", 1))
    direction = int(cfg.phi.get("direction", 0))
    comp = np.zeros((ctx.curve.n_nodes, cfg.n - 1))
    th = 2 * np.pi * wavenumber * ctx.curve.sbar / ctx.curve.L
    comp[:, direction] = amp * (np.cos(th) if mode == "cos" else np.sin(th))
    return comp


def stage_f1(ctx: ScenarioContext) -> dict:
    cfg = ctx.cfg
    phi_comp = _phi_components(ctx)
    if phi_comp is None or ctx.A == 0.0:
        return {"skipped": "needs A > 0 and a [phi] block"}
    phi_amb = np.einsum("ik,ikj->ij", phi_comp, ctx.curve.frame)
    sol = jacobi.solve_f1(ctx.curve, ctx.V, ctx.A, cfg.p, cfg.n, phi_amb)
    mean = abs(spectral.mean_integral(sol.fprime1, ctx.curve.L))
    ap = profile.A_prime(ctx.curve, ctx.V, ctx.A, cfg.p, cfg.n, phi_amb)
    ctx.checks["f1_T_equation"] = bool(sol.T_residual < 1e-8)
    ctx.checks["f1_mean_zero"] = bool(mean < 1e-10)
    return {"T_residual": sol.T_residual, "mean_fprime1": mean,
            "c_constant": sol.c_constant, "A_prime_phi": ap,
            "fprime1": sol.fprime1}


def stage_residual(ctx: ScenarioContext) -> dict:
    cfg = ctx.cfg
    phi_comp = _phi_components(ctx)
    setup = rh.HarnessSetup(
        curve=ctx.curve, V=ctx.V, A=ctx.A, p=cfg.p, n=cfg.n, g=ctx.g,
        phi_comp=phi_comp, tube_radius=cfg.tube_radius,
        z_spacing=cfg.z_spacing, z_order=cfg.z_order, s_spacing=cfg.s_spacing)
    if cfg.eps_mode == "quantized":
        eps_list = rh.eps_ladder_for_quantization(setup, cfg.eps_list)
    else:
        eps_list = list(cfg.eps_list)

    entries = []
    projections = []
    for e in eps_list:
        fieldobj = rh.assemble_psi1(setup, e)
        res = rh.apply_nls_operator(fieldobj)
        norms = rh.residual_norms(fieldobj, res)
        proj = rh.project_residual(fieldobj, res)
        entries.append(rh.ResidualEntry(
            eps=e, sup=norms["sup"], l2=norms["l2"],
            proj_imag_sup=proj["sup_imag"], proj_real_sup=proj["sup_real"]))
        projections.append({"eps": e, "sbar": fieldobj.sbar,
                            "P_imag": proj["P_imag"],
                            "P_real": proj["P_real"]})
    ctx.residual_projections = projections
    out = {
        "eps": eps_list,
        "sup": [e.sup for e in entries],
        "l2": [e.l2 for e in entries],
        "proj_imag_sup": [e.proj_imag_sup for e in entries],
        "proj_real_sup": [e.proj_real_sup for e in entries],
        "slope_sup": rh.scaling_fit(eps_list, [e.sup for e in entries]),
        "slope_l2": rh.scaling_fit(eps_list, [e.l2 for e in entries]),
    }
    pr = [e.proj_real_sup for e in entries]
    out["slope_proj_real"] = (rh.scaling_fit(eps_list, pr)
                              if min(pr) > 0 else None)
    pi = [e.proj_imag_sup for e in entries]
    out["slope_proj_imag"] = (rh.scaling_fit(eps_list, pi)
                              if min(pi) > 1e-13 else None)
    ctx.checks["residual_scaling"] = bool(1.7 <= out["slope_sup"] <= 2.3)

    if cfg.ablations:
        nc = rh.HarnessSetup(
            curve=ctx.curve, V=ctx.V, A=ctx.A, p=cfg.p, n=cfg.n, g=ctx.g,
            use_corrections=False, tube_radius=cfg.tube_radius,
            z_spacing=cfg.z_spacing, z_order=cfg.z_order,
            s_spacing=cfg.s_spacing)
        e_nc = [rh.run_entry(nc, e) for e in eps_list]
        out["ablation_no_corrections_sup"] = [e.sup for e in e_nc]
        out["slope_no_corrections"] = rh.scaling_fit(
            eps_list, [e.sup for e in e_nc])
        ctx.checks["ablation_no_corrections"] = bool(
            0.8 <= out["slope_no_corrections"] <= 1.3)
        if ctx.r_star is not None:
            c_off = curves.circle(ctx.r_star + 0.1, n=cfg.n,
                                  n_nodes=cfg.n_nodes)
            off = rh.HarnessSetup(
                curve=c_off, V=ctx.V, A=ctx.A, p=cfg.p, n=cfg.n, g=ctx.g,
                require_stationary=False, check_wro_solvability=False,
                tube_radius=cfg.tube_radius, z_spacing=cfg.z_spacing,
                z_order=cfg.z_order, s_spacing=cfg.s_spacing)
            e_off = [rh.run_entry(off, e) for e in eps_list]
            out["ablation_off_stationary_sup"] = [e.sup for e in e_off]
            out["slope_off_stationary"] = rh.scaling_fit(
                eps_list, [e.sup for e in e_off])
            ctx.checks["ablation_off_stationary"] = bool(
                0.8 <= out["slope_off_stationary"] <= 1.3)
    return out


STAGES = {
    "ground-state": stage_ground_state,
    "profile": stage_profile,
    "euler": stage_euler,
    "jacobi": stage_jacobi,
    "f1": stage_f1,
    "residual": stage_residual,
}

PIPELINE = ("ground-state", "profile", "euler", "jacobi", "f1", "residual")


def run_scenario(cfg: ScenarioConfig, stages=PIPELINE, outdir=None,
                 figures: bool = True) -> dict:
    """Execute the requested stages, write artifacts, return the manifest."""
    from . import report

    ctx = build_context(cfg)
    outdir = Path(outdir or cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    results = {}
    needed = _with_dependencies(stages)
    for name in PIPELINE:
        if name not in needed:
            continue
        try:
            results[name] = STAGES[name](ctx)
        except (SolvabilityError, rh.HarnessError) as exc:
            results[name] = {"error": str(exc)}
            ctx.checks[f"{name}_completed"] = False
            break
    report.write_artifacts(ctx, results, outdir, requested=stages,
                           figures=figures)
    manifest = report.write_manifest(ctx, results, outdir, requested=stages)
    return manifest


def _with_dependencies(stages) -> set:
    deps = {
        "ground-state": set(),
        "profile": {"ground-state"},
        "euler": {"ground-state", "profile"},
        "jacobi": {"ground-state", "profile"},
        "f1": {"ground-state", "profile"},
        "residual": {"ground-state", "profile", "euler"},
    }
    out = set()
    for s in stages:
        if s not in STAGES:
            raise ConfigError(f"unknown stage '{s}'")
        out |= deps[s] | {s}
    return out
