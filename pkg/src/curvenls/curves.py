"""Closed curves in flat R^n: arclength parameterization, parallel normal
frames, curvature, and the exact / expanded Fermi-coordinate metric.

Curves are stored on a uniform periodic arclength grid together with a
trigonometric interpolant, so all along-curve derivatives are spectral.
Normal frames are rotation-minimizing (double-reflection transport); for
n >= 3 the transported frame may fail to close and the mismatch angle is
reported as the holonomy. All geometric outputs used downstream (curvature
vector, sections) are stored as ambient vectors, so nothing depends on the
frame closing up.
"""

from dataclasses import dataclass, field

import numpy as np

from . import spectral


class CurveError(Exception):
    pass


@dataclass(frozen=True)
class CurveModel:
    n: int
    L: float
    sbar: np.ndarray                 # (N,) uniform arclength nodes in [0, L)
    gamma: np.ndarray                # (N, n)
    tangent: np.ndarray              # (N, n) unit tangent
    frame: np.ndarray                # (N, n-1, n) orthonormal normal frame
    Hvec: np.ndarray                 # (N, n) curvature vector (ambient)
    Hcomp: np.ndarray                # (N, n-1) components <H, Y_j>
    holonomy_angle: float
    closed: bool = True
    _gamma_eval: object = field(repr=False, compare=False, default=None)

    @property
    def n_nodes(self) -> int:
        return self.sbar.size

    def gamma_at(self, s, order: int = 0):
        """Trig-interpolated position (or s-derivative) at arbitrary s."""
        return self._gamma_eval(np.mod(s, self.L), order=order)

    def hvec_at(self, s):
        return self.gamma_at(s, order=2)

    def node_of(self, s: float) -> int:
        return int(np.round(np.mod(s, self.L) / (self.L / self.n_nodes))) % self.n_nodes

    def resample(self, n_nodes: int) -> "CurveModel":
        if not self.closed:
            raise CurveError("cannot resample an open fixture")
        s_new = self.L * np.arange(n_nodes) / n_nodes
        return _finalize_model(self.gamma_at(s_new), self.L, self.n)

    def normal_project(self, vec: np.ndarray) -> np.ndarray:
        """Project ambient vectors (N, n) onto the normal space per node."""
        t = self.tangent
        return vec - np.sum(vec * t, axis=-1, keepdims=True) * t


def _fourier_resample_points(samples: np.ndarray, t_query: np.ndarray,
                             order: int = 0) -> np.ndarray:
    ev = spectral.trig_interp_matrixfree(samples, 2.0 * np.pi)
    return ev(t_query, order=order)


def arclength_reparam(samples: np.ndarray, n: int | None = None,
                      n_nodes: int = 256, passes: int = 2) -> CurveModel:
    """Uniform-arclength resampling of a closed curve given by samples.

    The samples are taken as one period of a smooth closed curve, uniformly
    spaced in a latent parameter. Interpolation is trigonometric, arclength
    is accumulated spectrally, and the inverse map is found by Newton
    iteration, so smooth presets reparameterize to near machine precision.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise CurveError("samples must be a 2-d array of points")
    if np.allclose(samples[0], samples[-1]):
        samples = samples[:-1]          # drop an explicitly repeated seam
    m, dim = samples.shape
    if n is not None and n != dim:
        raise CurveError(f"samples have dimension {dim}, expected n={n}")
    if m < 8:
        raise CurveError("need at least 8 samples of the closed curve")
    seglen = np.linalg.norm(np.diff(samples, axis=0, append=samples[:1]), axis=1)
    if np.any(seglen < 1e-14):
        raise CurveError("degenerate input: coincident consecutive points")

    gamma = samples
    for _ in range(passes):
        mfine = 8 * gamma.shape[0]
        tfine = 2.0 * np.pi * np.arange(mfine) / mfine
        dgam = _fourier_resample_points(gamma, tfine, order=1)
        speed = np.linalg.norm(dgam, axis=1)
        if np.min(speed) < 1e-12:
            raise CurveError("degenerate parameterization (vanishing speed)")
        length = float(spectral.mean_integral(speed, 2.0 * np.pi))
        cum = spectral.antiderivative(speed, 2.0 * np.pi)      # s(t) - s(0)
        # periodic part of s(t) for evaluation at arbitrary t
        mean_speed = length / (2.0 * np.pi)
        per_eval = spectral.trig_interp_matrixfree(
            cum - mean_speed * tfine, 2.0 * np.pi)
        speed_eval = spectral.trig_interp_matrixfree(speed, 2.0 * np.pi)

        s_targets = length * np.arange(n_nodes) / n_nodes
        t = s_targets / mean_speed          # initial guess
        for _ in range(50):
            f = mean_speed * t + per_eval(t) - s_targets
            t = t - f / speed_eval(t)
            if np.max(np.abs(f)) < 1e-13 * max(length, 1.0):
                break
        gamma = _fourier_resample_points(gamma, np.mod(t, 2.0 * np.pi))

    return _finalize_model(gamma, length, dim)


def _double_reflection_frame(gamma: np.ndarray, tangent: np.ndarray,
                             frame0: np.ndarray) -> np.ndarray:
    """Rotation-minimizing transport of the initial normal frame."""
    n_nodes = gamma.shape[0]
    k, n = frame0.shape
    frames = np.empty((n_nodes, k, n))
    frames[0] = frame0
    for i in range(n_nodes - 1):
        frames[i + 1] = _dr_step(gamma[i], tangent[i], frames[i],
                                 gamma[i + 1], tangent[i + 1])
    return frames


def _dr_step(x0, t0, ys, x1, t1):
    v1 = x1 - x0
    c1 = v1 @ v1
    if c1 < 1e-28:
        return ys.copy()
    y_l = ys - (2.0 / c1) * (ys @ v1)[:, None] * v1
    t_l = t0 - (2.0 / c1) * (t0 @ v1) * v1
    v2 = t1 - t_l
    c2 = v2 @ v2
    if c2 < 1e-28:
        out = y_l
    else:
        out = y_l - (2.0 / c2) * (y_l @ v2)[:, None] * v2
    # clean tangential leakage and re-orthonormalize (roundoff control)
    out = out - (out @ t1)[:, None] * t1
    q, _ = np.linalg.qr(out.T)
    sign = np.sign(np.sum(q.T * out, axis=1))
    return (q * sign).T


def _initial_frame(t0: np.ndarray) -> np.ndarray:
    n = t0.size
    if n == 2:
        return np.array([[t0[1], -t0[0]]])
    basis = []
    for e in np.eye(n):
        v = e - (e @ t0) * t0
        for b in basis:
            v = v - (v @ b) * b
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            basis.append(v / norm)
        if len(basis) == n - 1:
            break
    return np.array(basis)


def _finalize_model(gamma: np.ndarray, length: float, n: int) -> CurveModel:
    n_nodes = gamma.shape[0]
    sbar = length * np.arange(n_nodes) / n_nodes
    tangent = spectral.diff(gamma, length, order=1, axis=0)
    speeds = np.linalg.norm(tangent, axis=1)
    if np.max(np.abs(speeds - 1.0)) > 1e-8:
        raise CurveError(
            f"arclength parameterization defect {np.max(np.abs(speeds - 1.0)):.2e}")
    tangent = tangent / speeds[:, None]
    hvec = spectral.diff(gamma, length, order=2, axis=0)

    if n == 2:
        frames = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)[:, None, :]
        holonomy = 0.0
    else:
        frame0 = _initial_frame(tangent[0])
        frames = _double_reflection_frame(gamma, tangent, frame0)
        closed_frame = _dr_step(gamma[-1], tangent[-1], frames[-1],
                                gamma[0], tangent[0])
        rot = closed_frame @ frame0.T
        if n == 3:
            holonomy = float(np.arctan2(rot[0, 1], rot[0, 0]))
        else:
            cos_h = np.clip((np.trace(rot) - (n - 3)) / 2.0, -1.0, 1.0)
            holonomy = float(np.arccos(cos_h))

    hcomp = np.einsum("ij,ikj->ik", hvec, frames)
    ev = spectral.trig_interp_matrixfree(gamma, length)
    return CurveModel(n=n, L=length, sbar=sbar, gamma=gamma, tangent=tangent,
                      frame=frames, Hvec=hvec, Hcomp=hcomp,
                      holonomy_angle=holonomy, _gamma_eval=ev)


def parallel_frame(c: CurveModel) -> CurveModel:
    """Rebuild the rotation-minimizing frame (already done at construction).

    Kept as an explicit step so frame data can be refreshed after manual
    edits of the tangent field; returns a model with frame fields filled.
    """
    return _finalize_model(c.gamma, c.L, c.n) if c.closed else c


def curvature_vector(c: CurveModel) -> np.ndarray:
    """Frame components of the curvature vector H = d T / d sbar."""
    return c.Hcomp


def frame_defects(c: CurveModel) -> dict:
    """Orthonormality and parallel-transport defect diagnostics."""
    t = c.tangent
    ortho = 0.0
    for j in range(c.n - 1):
        yj = c.frame[:, j, :]
        ortho = max(ortho, float(np.max(np.abs(np.sum(yj * t, axis=1)))))
        for k in range(j, c.n - 1):
            dot = np.sum(yj * c.frame[:, k, :], axis=1)
            target = 1.0 if j == k else 0.0
            ortho = max(ortho, float(np.max(np.abs(dot - target))))
    ds = c.L / c.n_nodes
    dy = (np.roll(c.frame, -1, axis=0) - np.roll(c.frame, 1, axis=0)) / (2 * ds)
    # normal-projected derivative should vanish for a parallel frame
    defect = 0.0
    for j in range(c.n - 1):
        dn = c.normal_project(dy[:, j, :])
        # at the seam the quasi-periodic frame jumps; skip the two end nodes
        defect = max(defect, float(np.max(np.linalg.norm(dn[2:-2], axis=1))))
    tangent_norm = float(np.max(np.abs(np.linalg.norm(t, axis=1) - 1.0)))
    return {"orthonormality": ortho, "parallel_defect": defect,
            "tangent_norm": tangent_norm}


# ---------------------------------------------------------------------------
# Fermi metric (exact in flat space with a parallel frame) and expansions

def _h_dot_y(c: CurveModel, node: int, y: np.ndarray) -> float:
    y = np.asarray(y, dtype=float)
    if y.shape != (c.n - 1,):
        raise CurveError(f"normal offset must have {c.n - 1} components")
    return float(c.Hcomp[node] @ y)


def fermi_metric_exact(c: CurveModel, s: float, y: np.ndarray) -> dict:
    """Exact metric components at normal offset y (frame components).

    In flat space with a parallel frame g_11 = (1 - <H, y>)^2, g_1j = 0,
    g_jk = delta_jk. Raises for |<H, y>| >= 1 (leaves the coordinate tube).
    """
    node = c.node_of(s)
    hy = _h_dot_y(c, node, y)
    if abs(hy) >= 1.0:
        raise CurveError(
            f"normal offset leaves the Fermi tube: <H, y> = {hy:.4f}")
    n = c.n
    g = np.eye(n)
    g[0, 0] = (1.0 - hy) ** 2
    ginv = np.eye(n)
    ginv[0, 0] = (1.0 - hy) ** (-2)
    return {"g": g, "g_inv": ginv, "sqrt_det": 1.0 - hy}


def fermi_metric_expansion(c: CurveModel, s: float, y: np.ndarray,
                           order: int) -> dict:
    """Taylor truncation of the metric about the curve.

    order 1: g_11 = 1 - 2<H, y>;  order 2 adds <H, y>^2 (the flat-space
    second derivative of g_11 is 2 H^m H^l). Off-diagonal and normal blocks
    are flat to this order.
    """
    if order not in (1, 2):
        raise CurveError("expansion order must be 1 or 2")
    node = c.node_of(s)
    hy = _h_dot_y(c, node, y)
    n = c.n
    g = np.eye(n)
    g[0, 0] = 1.0 - 2.0 * hy + (hy**2 if order == 2 else 0.0)
    return {"g": g, "sqrt_det": 1.0 - hy}


def potential_normal_data(V, c: CurveModel):
    """(V, normal gradient components, frame-restricted Hessian) on the grid."""
    vals = V.value(c.gamma)
    grad = V.gradient(c.gamma)
    hess = V.hessian(c.gamma)
    gradn = grad - np.sum(grad * c.tangent, axis=1, keepdims=True) * c.tangent
    gradn_comp = np.einsum("ij,ikj->ik", gradn, c.frame)
    hessn = np.einsum("ikj,ijl,iml->ikm", c.frame, hess, c.frame)
    return vals, gradn_comp, hessn


# ---------------------------------------------------------------------------
# Presets

def circle(radius: float, n: int = 2, n_nodes: int = 256, center=None,
           n_samples: int = 256) -> CurveModel:
    if radius <= 0:
        raise CurveError("circle radius must be positive")
    t = 2.0 * np.pi * np.arange(n_samples) / n_samples
    pts = np.zeros((n_samples, n))
    pts[:, 0] = radius * np.cos(t)
    pts[:, 1] = radius * np.sin(t)
    if center is not None:
        pts += np.asarray(center, dtype=float)
    return arclength_reparam(pts, n, n_nodes)


def ellipse(a: float, b: float, n: int = 2, n_nodes: int = 256,
            n_samples: int = 512) -> CurveModel:
    if a <= 0 or b <= 0:
        raise CurveError("ellipse semi-axes must be positive")
    t = 2.0 * np.pi * np.arange(n_samples) / n_samples
    pts = np.zeros((n_samples, n))
    pts[:, 0] = a * np.cos(t)
    pts[:, 1] = b * np.sin(t)
    return arclength_reparam(pts, n, n_nodes)


def torus_knot(p: int = 2, q: int = 3, R: float = 2.0, r: float = 0.5,
               n_nodes: int = 256, n_samples: int = 1024) -> CurveModel:
    t = 2.0 * np.pi * np.arange(n_samples) / n_samples
    pts = np.stack([
        (R + r * np.cos(q * t)) * np.cos(p * t),
        (R + r * np.cos(q * t)) * np.sin(p * t),
        r * np.sin(q * t),
    ], axis=1)
    return arclength_reparam(pts, 3, n_nodes)


def from_csv(path, n: int | None = None, n_nodes: int = 256) -> CurveModel:
    pts = np.loadtxt(path, delimiter=",", ndmin=2)
    return arclength_reparam(pts, n, n_nodes)


def make_curve(preset: str, n: int, n_nodes: int = 256, **params) -> CurveModel:
    presets = {"circle", "ellipse", "torus-knot", "samples-csv"}
    if preset == "circle":
        return circle(params["radius"], n=n, n_nodes=n_nodes,
                      center=params.get("center"))
    if preset == "ellipse":
        return ellipse(params["a"], params["b"], n=n, n_nodes=n_nodes)
    if preset == "torus-knot":
        return torus_knot(params.get("p", 2), params.get("q", 3),
                          params.get("R", 2.0), params.get("r", 0.5),
                          n_nodes=n_nodes)
    if preset == "samples-csv":
        return from_csv(params["path"], n=n, n_nodes=n_nodes)
    raise CurveError(f"unknown curve preset '{preset}'; choose from {sorted(presets)}")


def line_fixture(n: int = 2, length: float = 2.0 * np.pi,
                 n_nodes: int = 64) -> CurveModel:
    """Straight open segment used as an internal test fixture (H = 0)."""
    sbar = length * np.arange(n_nodes) / n_nodes
    gamma = np.zeros((n_nodes, n))
    gamma[:, 0] = sbar
    tangent = np.zeros((n_nodes, n))
    tangent[:, 0] = 1.0
    frames = np.broadcast_to(np.eye(n)[1:], (n_nodes, n - 1, n)).copy()
    return CurveModel(n=n, L=length, sbar=sbar, gamma=gamma, tangent=tangent,
                      frame=frames, Hvec=np.zeros((n_nodes, n)),
                      Hcomp=np.zeros((n_nodes, n - 1)), holonomy_angle=0.0,
                      closed=False,
                      _gamma_eval=lambda s, order=0: _line_eval(s, n, order))


def _line_eval(s, n, order):
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.zeros((s.size, n))
    if order == 0:
        out[:, 0] = s
    elif order == 1:
        out[:, 0] = 1.0
    return out
