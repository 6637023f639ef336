"""Delimited artifacts, JSON reports and the rendered figures.

CSV files are the source of truth: fixed %.17g formatting keeps reruns
byte-identical. Figures are rendered next to them with deterministic
metadata.
"""

import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__

_RC = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 130,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


def write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, delimiter=",", header=",".join(header),
               comments="", fmt="%.17g")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True)
                    + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)


def _savefig(fig, path: Path) -> None:
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def write_artifacts(ctx, results: dict, outdir: Path, requested,
                    figures: bool = True) -> None:
    outdir = Path(outdir)
    if "ground-state" in results and ctx.g is not None:
        g = ctx.g
        write_csv(outdir / "ground_state.csv", ["r", "U", "Uprime"],
                  [g.r_grid, g.U, g.Uprime])
        write_json(outdir / "ground_state.json", results["ground-state"])
    if "profile" in results and ctx.pf is not None:
        pf = ctx.pf
        rho = None
        if "euler" in results and "error" not in results.get("euler", {}):
            from .profile import euler_residual
            rho = euler_residual(ctx.curve, ctx.V, ctx.A, ctx.cfg.p, ctx.cfg.n)
        cols = [pf.sbar, pf.V, pf.h, pf.k, pf.fprime]
        names = ["sbar", "V", "h", "k", "fprime"]
        if rho is not None:
            for m in range(rho.shape[1]):
                cols.append(rho[:, m])
                names.append(f"euler_residual_{m + 2}")
        write_csv(outdir / "profile.csv", names, cols)
        write_json(outdir / "profile.json",
                   {k: v for k, v in results["profile"].items()})
    if "jacobi" in results and "error" not in results.get("jacobi", {}):
        eigs = getattr(ctx, "jacobi_eigs", None)
        if eigs is not None:
            write_csv(outdir / "jacobi_eigenvalues.csv",
                      ["re", "im", "abs"],
                      [eigs.real, eigs.imag, np.abs(eigs)])
        write_json(outdir / "jacobi.json",
                   {k: v for k, v in results["jacobi"].items()
                    if k != "eigenvalues_real"})
    if "f1" in results and "fprime1" in results.get("f1", {}):
        write_csv(outdir / "f1.csv", ["sbar", "fprime1"],
                  [ctx.curve.sbar, results["f1"]["fprime1"]])
        write_json(outdir / "f1.json",
                   {k: v for k, v in results["f1"].items() if k != "fprime1"})
    if "residual" in results and "error" not in results.get("residual", {}):
        res = results["residual"]
        cols = [res["eps"], res["sup"], res["l2"],
                res["proj_imag_sup"], res["proj_real_sup"]]
        names = ["eps", "sup", "l2", "proj_imag_sup", "proj_real_sup"]
        for key in ("ablation_no_corrections_sup", "ablation_off_stationary_sup"):
            if key in res:
                cols.append(res[key])
                names.append(key)
        write_csv(outdir / "residual_sweep.csv", names, cols)
        write_json(outdir / "residual.json", res)
        for proj in getattr(ctx, "residual_projections", []):
            tag = f"{proj['eps']:.6f}".replace(".", "p")
            pcols = [proj["sbar"], proj["P_imag"]]
            pnames = ["sbar", "P_imag"]
            for m in range(proj["P_real"].shape[1]):
                pcols.append(proj["P_real"][:, m])
                pnames.append(f"P_real_{m + 2}")
            write_csv(outdir / f"residual_projections_eps{tag}.csv",
                      pnames, pcols)
    if figures:
        render_figures(ctx, results, outdir)


def render_figures(ctx, results: dict, outdir: Path) -> None:
    outdir = Path(outdir)
    with plt.rc_context(_RC):
        if ctx.g is not None and "ground-state" in results:
            fig, ax = plt.subplots()
            ax.plot(ctx.g.r_grid, ctx.g.U, label="U")
            ax.plot(ctx.g.r_grid, ctx.g.Uprime, label="U'")
            ax.set_xlabel("r")
            ax.set_title(f"ground state p={ctx.cfg.p}, d={ctx.cfg.n - 1}")
            ax.legend()
            _savefig(fig, outdir / "ground_state.png")
        if ctx.pf is not None and "profile" in results:
            pf = ctx.pf
            fig, ax = plt.subplots()
            ax.plot(pf.sbar, pf.h, label="h")
            ax.plot(pf.sbar, pf.k, label="k")
            ax.plot(pf.sbar, pf.fprime, label="f'")
            ax.set_xlabel("arclength")
            ax.set_title("profile fields along the curve")
            ax.legend()
            _savefig(fig, outdir / "profile.png")
        eigs = getattr(ctx, "jacobi_eigs", None)
        if eigs is not None and "jacobi" in results:
            fig, ax = plt.subplots()
            ax.plot(eigs.real, eigs.imag, "o", ms=3)
            ax.axvline(0.0, color="k", lw=0.8)
            ax.set_xlabel("Re eigenvalue")
            ax.set_ylabel("Im eigenvalue")
            ax.set_title("nondegeneracy operator spectrum")
            _savefig(fig, outdir / "jacobi_spectrum.png")
        res = results.get("residual")
        if res and "error" not in res:
            fig, ax = plt.subplots()
            eps = np.asarray(res["eps"])
            ax.loglog(eps, res["sup"], "o-",
                      label=f"full (slope {res['slope_sup']:.2f})")
            if "ablation_no_corrections_sup" in res:
                ax.loglog(eps, res["ablation_no_corrections_sup"], "s--",
                          label=("no corrections "
                                 f"(slope {res['slope_no_corrections']:.2f})"))
            if "ablation_off_stationary_sup" in res:
                ax.loglog(eps, res["ablation_off_stationary_sup"], "^--",
                          label=("off-stationary "
                                 f"(slope {res['slope_off_stationary']:.2f})"))
            ax.set_xlabel("eps")
            ax.set_ylabel("sup-norm residual")
            ax.set_title("residual scaling")
            ax.legend()
            _savefig(fig, outdir / "residual_scaling.png")


def write_manifest(ctx, results: dict, outdir: Path, requested) -> dict:
    import numpy
    import scipy

    tolerances = {
        "ground_state_ode_residual": 1e-8,
        "pohozaev_identities": 1e-6,
        "profile_relations": 1e-10,
        "quantization_defect": 1e-10,
        "euler_stationarity": 1e-8,
        "jacobi_duality": 1e-6,
        "f1_T_equation": 1e-8,
        "residual_scaling_window": [1.7, 2.3],
        "ablation_window": [0.8, 1.3],
    }
    manifest = {
        "curvenls_version": __version__,
        "numpy_version": numpy.__version__,
        "scipy_version": scipy.__version__,
        "config_hash": ctx.cfg.config_hash,
        "requested_stages": list(requested),
        "tolerances": tolerances,
        "checks": dict(ctx.checks),
        "all_passed": bool(all(ctx.checks.values())) and bool(ctx.checks),
        "stage_summaries": {k: _summary(v) for k, v in results.items()},
    }
    write_json(Path(outdir) / "manifest.json", manifest)
    return manifest


def _summary(stage_result: dict) -> dict:
    drop = {"fprime1", "eigenvalues_real"}
    return {k: _jsonable(v) for k, v in stage_result.items() if k not in drop}
