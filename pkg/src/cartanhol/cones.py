"""Metric cones dr^2 + r^2 h over a base chart, radial fields and cone certificates."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import MetricDegenerate, NoFixedPoint, OutOfDomain
from .geometry import FramePoint, MetricChart, orthonormal_frame, riemann_tensor
from .tolerances import DEFAULT, Tolerances


@dataclass(frozen=True, eq=False)
class ConeChart(MetricChart):
    base_chart: MetricChart | None = None
    r_min: float = 0.0
    r_max: float = 0.0


def make_cone(base_chart: MetricChart, r_min: float = 0.05, r_max: float = 5.0) -> ConeChart:
    """Cone over ``base_chart`` on the annulus r_min < r < r_max (apex excluded).

    Christoffel symbols in coordinates (r, y): Gamma^r_ab = -r h_ab,
    Gamma^a_rb = delta^a_b / r, and the base symbols in the angular block.
    """
    if not 0 < r_min < r_max:
        raise MetricDegenerate("cone needs 0 < r_min < r_max")
    l = base_chart.dim
    m = l + 1

    def metric(x):
        r = x[..., 0]
        out = np.zeros(np.shape(x)[:-1] + (m, m))
        out[..., 0, 0] = 1.0
        out[..., 1:, 1:] = (r * r)[..., None, None] * base_chart.metric(x[..., 1:])
        return out

    def gamma(x):
        r = x[..., 0]
        h = base_chart.metric(x[..., 1:])
        out = np.zeros(np.shape(x)[:-1] + (m, m, m))
        out[..., 0, 1:, 1:] = -r[..., None, None] * h
        inv = np.broadcast_to((1.0 / r)[..., None], np.shape(r) + (l,))
        idx = np.arange(1, m)
        out[..., idx, 0, idx] = inv
        out[..., idx, idx, 0] = inv
        out[..., 1:, 1:, 1:] = base_chart.christoffel(x[..., 1:])
        return out

    probe = np.array([0.5 * (lo + hi) if np.isfinite(lo) and np.isfinite(hi) else 0.0
                      for lo, hi in zip(base_chart.lower, base_chart.upper)])
    if np.min(np.linalg.eigvalsh(base_chart.metric(probe))) <= 0:
        raise MetricDegenerate("cone base metric is not positive definite")
    return ConeChart(
        m,
        (r_min,) + tuple(base_chart.lower),
        (r_max,) + tuple(base_chart.upper),
        metric,
        gamma,
        label=f"cone({base_chart.label})",
        periods=(None,) + tuple(base_chart.periods),
        descriptor={"kind": "cone", "base": base_chart.descriptor, "r_min": r_min, "r_max": r_max},
        base_chart=base_chart,
        r_min=r_min,
        r_max=r_max,
    )


class ConeVerdict(str, enum.Enum):
    CONE = "CONE"
    NOT_CONE = "NOT_CONE"
    INCONCLUSIVE = "INCONCLUSIVE"


def probe_directions(m: int, count: int = 8) -> np.ndarray:
    """Deterministic unit directions in orthonormal-frame coordinates."""
    if m == 2:
        ang = np.arange(count) * (2 * np.pi / count)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    cands = []
    for k in range(m):
        for s in (1.0, -1.0):
            v = np.zeros(m)
            v[k] = s
            cands.append(v)
    for i, j in itertools.combinations(range(m), 2):
        for s in (1.0, -1.0):
            v = np.zeros(m)
            v[i], v[j] = 1.0, s
            cands.append(v / np.sqrt(2.0))
    return np.array(cands[:count])


class RadialField:
    """The field V with V(x) = p* propagated along geodesics from x by grad_{gamma'} V = -gamma'.

    Points are addressed by w, the initial velocity (orthonormal-frame coordinates) of the
    unit-time geodesic from x; ``jet`` returns positions, V, and their w-derivatives by
    central differences.
    """

    def __init__(self, chart: MetricChart, x, p_star, frame: np.ndarray | None = None,
                 probe_step: float = 0.01, h_w: float = 1e-5, tol: Tolerances = DEFAULT):
        self.chart = chart
        self.x = chart.require(x)
        self.frame = orthonormal_frame(chart, self.x).columns if frame is None else np.asarray(frame)
        self.p_star = np.asarray(p_star, dtype=float)
        self.v0 = self.frame @ self.p_star
        self.probe_step = probe_step
        self.h_w = h_w
        self.tol = tol

    def evaluate(self, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        W = np.atleast_2d(np.asarray(W, dtype=float))
        n = max(4, math.ceil(float(np.max(np.linalg.norm(W, axis=1))) / self.probe_step))
        dt = 1.0 / n
        q = np.broadcast_to(self.x, W.shape).copy()
        v = W @ self.frame.T
        V = np.broadcast_to(self.v0, W.shape).copy()
        chart, h_fd = self.chart, self.tol.h_fd

        def rhs(q, v, V):
            gam = chart.christoffel(q, h_fd)
            return (v, -np.einsum("pkij,pi,pj->pk", gam, v, v),
                    -np.einsum("pkij,pi,pj->pk", gam, v, V) - v)

        for _ in range(n):
            a = rhs(q, v, V)
            b = rhs(q + 0.5 * dt * a[0], v + 0.5 * dt * a[1], V + 0.5 * dt * a[2])
            c = rhs(q + 0.5 * dt * b[0], v + 0.5 * dt * b[1], V + 0.5 * dt * b[2])
            d = rhs(q + dt * c[0], v + dt * c[1], V + dt * c[2])
            q = q + dt / 6 * (a[0] + 2 * b[0] + 2 * c[0] + d[0])
            v = v + dt / 6 * (a[1] + 2 * b[1] + 2 * c[1] + d[1])
            V = V + dt / 6 * (a[2] + 2 * b[2] + 2 * c[2] + d[2])
            if not np.all(chart.contains(q)):
                raise OutOfDomain("radial probe left the chart domain")
        return q, V

    def jet(self, W: np.ndarray):
        """q(w), V(w), dq/dw and dV/dw; derivative arrays are indexed [p, component, j]."""
        W = np.atleast_2d(np.asarray(W, dtype=float))
        P, m = W.shape
        h = self.h_w
        offsets = np.concatenate([np.zeros((1, m)), h * np.eye(m), -h * np.eye(m)])
        allw = (W[:, None, :] + offsets[None]).reshape(-1, m)
        q, V = self.evaluate(allw)
        q = q.reshape(P, 2 * m + 1, m)
        V = V.reshape(P, 2 * m + 1, m)
        J = np.swapaxes((q[:, 1:m + 1] - q[:, m + 1:]) / (2 * h), 1, 2)
        dV = np.swapaxes((V[:, 1:m + 1] - V[:, m + 1:]) / (2 * h), 1, 2)
        return q[:, 0], V[:, 0], J, dV

    # interface shared with plain vector fields in homothety_check
    def param_state(self, W):
        q, V, J, _ = self.jet(W)
        return q, V, J


class _CoordinateField:
    """A vector field given as a callable on chart coordinates."""

    def __init__(self, chart: MetricChart, fn):
        self.chart = chart
        self.fn = fn

    def param_state(self, W):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        if not np.all(self.chart.contains(W)):
            raise OutOfDomain("flow left the chart domain")
        V = np.asarray(self.fn(W), dtype=float).reshape(W.shape)
        J = np.broadcast_to(np.eye(W.shape[1]), W.shape + (W.shape[1],))
        return W, V, J


@dataclass(frozen=True)
class FieldProbes:
    w: np.ndarray
    points: np.ndarray
    values: np.ndarray


def radial_field_from_point(chart: MetricChart, x, p_star, frame=None, radii=(0.1, 0.2, 0.3, 0.4),
                            n_directions: int = 8, probe_step: float = 0.01,
                            tol: Tolerances = DEFAULT) -> FieldProbes:
    """V at the deterministic probe grid (the base point plus directions x radii)."""
    field_ = RadialField(chart, x, p_star, frame, probe_step, tol=tol)
    W = _probe_grid(chart.dim, radii, n_directions)
    q, V = field_.evaluate(W)
    return FieldProbes(W, q, V)


def _probe_grid(m: int, radii, n_directions: int) -> np.ndarray:
    dirs = probe_directions(m, n_directions)
    return np.concatenate([np.zeros((1, m))] + [r * dirs for r in radii])


def _flow_params(field_, W0: np.ndarray, t_end: float, dt: float) -> np.ndarray:
    """RK4 flow of the field in its parameter coordinates: dw/dt = J^{-1} V."""

    def rhs(W):
        _, V, J = field_.param_state(W)
        return np.linalg.solve(J, V[..., None])[..., 0]

    n = max(1, math.ceil(t_end / dt - 1e-9))
    h = t_end / n
    W = W0.copy()
    for _ in range(n):
        a = rhs(W)
        b = rhs(W + 0.5 * h * a)
        c = rhs(W + 0.5 * h * b)
        d = rhs(W + h * c)
        W = W + h / 6 * (a + 2 * b + 2 * c + d)
    return W


def homothety_check(chart: MetricChart, x, field_, t_list=(0.05, 0.1), points=None, dt: float = 0.01,
                    h_flow: float = 1e-4) -> float:
    """max over probes and t of the relative defects of F_t^* g = e^{-2t} g and f(F_t q) = e^{-2t} f(q).

    ``field_`` is a :class:`RadialField` or a callable V(q) on chart coordinates; the flow is
    integrated in that field's parameter coordinates and the metric pulled back there.
    """
    if callable(field_) and not hasattr(field_, "param_state"):
        field_ = _CoordinateField(chart, field_)
        W0 = np.atleast_2d(np.asarray(x if points is None else points, dtype=float))
    else:
        W0 = np.atleast_2d(np.zeros(chart.dim) if points is None else np.asarray(points, dtype=float))
    P, m = W0.shape
    offsets = np.concatenate([np.zeros((1, m)), h_flow * np.eye(m), -h_flow * np.eye(m)])
    starts = (W0[:, None, :] + offsets[None]).reshape(-1, m)

    def metric_and_f(W):
        q, V, J = field_.param_state(W)
        g = chart.metric(q)
        G = np.einsum("pai,pab,pbj->pij", J, g, J)
        f = np.einsum("pa,pab,pb->p", V, g, V)
        return G, f

    G0, f0 = metric_and_f(W0)
    worst = 0.0
    t_prev, current = 0.0, starts
    for t in sorted(t_list):
        if t == 0:
            continue  # F_0 is the identity
        current = _flow_params(field_, current, t - t_prev, dt)
        t_prev = t
        flowed = current.reshape(P, 2 * m + 1, m)
        D = np.swapaxes((flowed[:, 1:m + 1] - flowed[:, m + 1:]) / (2 * h_flow), 1, 2)
        Gt, ft = metric_and_f(flowed[:, 0])
        pulled = np.einsum("pai,pab,pbj->pij", D, Gt, D)
        scale = np.max(np.abs(G0), axis=(1, 2))
        metric_def = np.max(np.abs(pulled - np.exp(-2 * t) * G0), axis=(1, 2)) / scale
        level_def = np.abs(ft - np.exp(-2 * t) * f0) / np.maximum(np.abs(f0), 1e-300)
        worst = max(worst, float(np.max(metric_def)), float(np.max(level_def)))
    return worst


@dataclass(frozen=True)
class ConeCertificate:
    base: np.ndarray
    p_star: np.ndarray
    v_norm: float
    residual_nabla: float
    residual_curv: float
    residual_homothety: float
    residual_grad: float
    verdict: ConeVerdict
    n_probes: int
    source: str
    tolerances: Tolerances

    @property
    def residuals(self) -> dict:
        return {"nabla": self.residual_nabla, "curvature": self.residual_curv,
                "homothety": self.residual_homothety, "grad": self.residual_grad}

    def to_json(self) -> dict:
        return {"base": self.base.tolist(), "p_star": self.p_star.tolist(), "v_norm": self.v_norm,
                "residuals": self.residuals, "verdict": self.verdict.value, "n_probes": self.n_probes,
                "p_star_source": self.source, "tolerances": self.tolerances.as_dict()}


def certify_cone(chart: MetricChart, x, p_star=None, protocol=None, tol: Tolerances = DEFAULT,
                 frame=None, radii=(0.1, 0.2, 0.3, 0.4), n_directions: int = 8,
                 t_list=(0.05, 0.1), probe_step: float = 0.01) -> ConeCertificate:
    """Test whether the field with V(x) = p* (frame coordinates) satisfies grad_X V + X = 0 near x.

    Without ``p_star`` the common fixed point of a fresh holonomy sample is used.
    Derivatives of V are finite differences across neighbouring probe geodesics, so
    cross-directions are tested independently of the radial ODE that built V.
    """
    from .affine import FixedPointVerdict, solve_fixed_point
    from .holonomy import Protocol, sample_holonomy

    x = chart.require(x)
    E0 = orthonormal_frame(chart, x).columns if frame is None else np.asarray(getattr(frame, "columns", frame))
    source = "supplied"
    if p_star is None:
        sample = sample_holonomy(chart, x, protocol or Protocol(), FramePoint(x, E0), tol)
        fp = solve_fixed_point(sample.elements, tol)
        if fp.verdict is FixedPointVerdict.NO_FIXED_POINT:
            raise NoFixedPoint(f"holonomy sample has no common fixed point (residual {fp.residual:.3e})")
        p_star, source = fp.point, "holonomy-fixed-point"
    p_star = np.asarray(p_star, dtype=float)
    field_ = RadialField(chart, x, p_star, E0, probe_step, tol=tol)
    W = _probe_grid(chart.dim, radii, n_directions)
    q, V, J, dV = field_.jet(W)
    gam = chart.christoffel(q, tol.h_fd)
    g = chart.metric(q)

    # grad_{X_j} V + X_j for X_j = dq/dw_j, normalised by |X_j|
    nabla = dV + np.einsum("pkij,pim,pj->pkm", gam, J, V) + J
    num = np.sqrt(np.einsum("pam,pab,pbm->pm", nabla, g, nabla))
    den = np.sqrt(np.einsum("pam,pab,pbm->pm", J, g, J))
    residual_nabla = float(np.max(num / den))

    # grad f = -2V with f = |V|^2, f differentiated across probes as well
    f_grad_w = 2 * np.einsum("pa,pab,pbj->pj", V, g, dV) + _metric_derivative_term(chart, q, V, J, tol)
    df_chart = np.linalg.solve(np.swapaxes(J, 1, 2), f_grad_w[..., None])[..., 0]
    grad = np.linalg.solve(g, df_chart[..., None])[..., 0]
    gdiff = grad + 2 * V
    residual_grad = float(np.max(np.sqrt(np.einsum("pa,pab,pb->p", gdiff, g, gdiff))))

    # R(e_a, e_b) V over orthonormal pairs at every probe point
    residual_curv = 0.0
    for qp, Vp in zip(q, V):
        riem = riemann_tensor(chart, qp, tol)
        frame_q = orthonormal_frame(chart, qp).columns
        gq = chart.metric(qp)
        for a, b in itertools.combinations(range(chart.dim), 2):
            rv = np.einsum("abcd,b,c,d->a", riem, Vp, frame_q[:, a], frame_q[:, b])
            residual_curv = max(residual_curv, float(np.sqrt(rv @ gq @ rv)))

    homothety_points = _probe_grid(chart.dim, radii[:2], n_directions)
    residual_hom = homothety_check(chart, x, field_, t_list, homothety_points)

    v_norm = float(np.linalg.norm(p_star))
    if v_norm <= tol.eps_v:
        verdict = ConeVerdict.INCONCLUSIVE
    elif max(residual_nabla, residual_curv, residual_hom, residual_grad) < tol.tol_cone:
        verdict = ConeVerdict.CONE
    else:
        verdict = ConeVerdict.NOT_CONE
    return ConeCertificate(x, p_star, v_norm, residual_nabla, residual_curv, residual_hom, residual_grad,
                           verdict, W.shape[0], source, tol)


def _metric_derivative_term(chart: MetricChart, q, V, J, tol: Tolerances) -> np.ndarray:
    """(d_j g)(V, V) along dq/dw_j, the part of d(g(V, V))/dw_j not carried by dV."""
    h = tol.h_fd
    m = chart.dim
    shifts = h * np.eye(m)
    dg = (chart.metric(q[:, None, :] + shifts) - chart.metric(q[:, None, :] - shifts)) / (2 * h)
    return np.einsum("pcab,pa,pb,pcj->pj", dg, V, V, J)
