"""Single-chart Riemannian geometry: metric, Levi-Civita connection, curvature, geodesics.

Chart callables are vectorised: ``metric_fn`` maps an array of points with shape
``(..., m)`` to ``(..., m, m)`` and the optional ``christoffel_fn`` maps it to
``(..., m, m, m)`` indexed ``[k, i, j]`` for the symbol with upper index ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, MetricDegenerate, OutOfDomain, StepTooLarge
from .tolerances import DEFAULT, Tolerances


@dataclass(frozen=True, eq=False)
class MetricChart:
    dim: int
    lower: tuple
    upper: tuple
    metric_fn: Callable[[np.ndarray], np.ndarray]
    christoffel_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = "chart"
    # Per-coordinate period (None = not periodic). Periodic coordinates have no bounds.
    periods: tuple = ()
    descriptor: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not self.periods:
            object.__setattr__(self, "periods", (None,) * self.dim)
        if not (len(self.lower) == len(self.upper) == len(self.periods) == self.dim):
            raise ValueError("domain bounds and periods must have one entry per coordinate")

    @property
    def has_analytic_christoffels(self) -> bool:
        return self.christoffel_fn is not None

    def periodic_axes(self) -> list[int]:
        return [k for k, p in enumerate(self.periods) if p is not None]

    def contains(self, x) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        inside = np.ones(x.shape[:-1], dtype=bool)
        for k in range(self.dim):
            if self.periods[k] is None:
                inside &= (x[..., k] > self.lower[k]) & (x[..., k] < self.upper[k])
        inside &= np.all(np.isfinite(x), axis=-1)
        return inside if inside.ndim else bool(inside)

    def require(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"{self.label}: expected {self.dim} coordinates, got {x.shape[-1]}")
        if not np.all(self.contains(x)):
            raise OutOfDomain(f"{self.label}: point outside chart domain")
        return x

    def metric(self, x) -> np.ndarray:
        return np.asarray(self.metric_fn(np.asarray(x, dtype=float)), dtype=float)

    def christoffel(self, x, h: float = DEFAULT.h_fd) -> np.ndarray:
        """Christoffel symbols at ``x`` (batched); analytic when available."""
        x = np.asarray(x, dtype=float)
        if self.christoffel_fn is not None:
            return np.asarray(self.christoffel_fn(x), dtype=float)
        return _fd_christoffel(self, x, h)

    def close_to(self, a, b, atol: float = 1e-12) -> bool:
        """Coordinate equality modulo the periods of periodic coordinates."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        for k, p in enumerate(self.periods):
            if p is not None:
                d[k] = d[k] - p * np.round(d[k] / p)
        return bool(np.all(np.abs(d) <= atol))


@dataclass(frozen=True)
class TangentVector:
    base: np.ndarray
    components: np.ndarray


@dataclass(frozen=True)
class FramePoint:
    base: np.ndarray
    columns: np.ndarray

    def __post_init__(self):
        if abs(np.linalg.det(self.columns)) <= DEFAULT.eps_frame:
            raise MetricDegenerate("frame matrix is singular")


@dataclass(frozen=True)
class CurvatureOperator:
    base: np.ndarray
    plane: tuple
    matrix: np.ndarray


def _components(v) -> np.ndarray:
    if isinstance(v, TangentVector):
        return np.asarray(v.components, dtype=float)
    return np.asarray(v, dtype=float)


def _fd_christoffel(chart: MetricChart, x: np.ndarray, h: float) -> np.ndarray:
    m = chart.dim
    shifts = h * np.eye(m)
    gp = chart.metric(x[..., None, :] + shifts)
    gm = chart.metric(x[..., None, :] - shifts)
    dg = (gp - gm) / (2.0 * h)  # [..., l, i, j] = d_l g_ij
    ginv = np.linalg.inv(chart.metric(x))
    # lowered[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    lowered = (
        np.einsum("...ijl->...lij", dg)
        + np.einsum("...jil->...lij", dg)
        - dg
    )
    return 0.5 * np.einsum("...kl,...lij->...kij", ginv, lowered)


def _check_metric(chart: MetricChart, x: np.ndarray, tol: Tolerances) -> np.ndarray:
    g = chart.metric(x)
    if not np.allclose(g, np.swapaxes(g, -1, -2), atol=1e-12, rtol=1e-10):
        raise MetricDegenerate(f"{chart.label}: metric not symmetric at {x}")
    if np.min(np.linalg.eigvalsh(g)) <= tol.eps_pd:
        raise MetricDegenerate(f"{chart.label}: metric not positive definite at {x}")
    return g


def christoffels(chart: MetricChart, x, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Gamma^k_ij at a single point, as an (m, m, m) array indexed [k, i, j]."""
    x = chart.require(x)
    _check_metric(chart, x, tol)
    return chart.christoffel(x, tol.h_fd)


def christoffel_derivative(chart: MetricChart, x: np.ndarray, tol: Tolerances = DEFAULT) -> np.ndarray:
    """d_c Gamma^a_ij as an array indexed [c, a, i, j].

    With analytic symbols a central difference of step h_fd is enough; finite-difference
    symbols are differenced again with the wider step sqrt(h_fd) so that roundoff does
    not dominate.
    """
    h = tol.h_fd if chart.has_analytic_christoffels else math.sqrt(tol.h_fd)
    shifts = h * np.eye(chart.dim)
    gp = chart.christoffel(x[None, :] + shifts, tol.h_fd)
    gm = chart.christoffel(x[None, :] - shifts, tol.h_fd)
    return (gp - gm) / (2.0 * h)


def riemann_tensor(chart: MetricChart, x, tol: Tolerances = DEFAULT) -> np.ndarray:
    """R^a_{bcd} with R(X, Y)Z = R^a_{bcd} Z^b X^c Y^d."""
    x = np.asarray(x, dtype=float)
    gam = chart.christoffel(x, tol.h_fd)
    dgam = christoffel_derivative(chart, x, tol)
    r = np.einsum("cadb->abcd", dgam) - np.einsum("dacb->abcd", dgam)
    r += np.einsum("ace,edb->abcd", gam, gam) - np.einsum("ade,ecb->abcd", gam, gam)
    return r


def curvature_op(chart: MetricChart, x, X, Y, tol: Tolerances = DEFAULT) -> CurvatureOperator:
    x = chart.require(x)
    for v in (X, Y):
        if isinstance(v, TangentVector) and not np.allclose(v.base, x):
            raise ValueError("tangent vectors must be based at x")
    xv, yv = _components(X), _components(Y)
    riem = riemann_tensor(chart, x, tol)
    mat = np.einsum("abcd,c,d->ab", riem, xv, yv)
    swapped = np.einsum("abcd,c,d->ab", riem, yv, xv)
    scale = max(1.0, float(np.max(np.abs(mat))))
    if np.max(np.abs(mat + swapped)) > 1e-9 * scale:
        raise AssertionError("curvature operator failed the (X, Y) antisymmetry check")
    return CurvatureOperator(base=x, plane=(xv, yv), matrix=mat)


def orthonormal_frame(chart: MetricChart, x, order: Sequence[int] | None = None) -> FramePoint:
    """Gram-Schmidt (w.r.t. g) on the chart basis vectors taken in ``order``."""
    x = chart.require(x)
    g = chart.metric(x)
    m = chart.dim
    order = list(range(m)) if order is None else list(order)
    cols = np.zeros((m, m))
    for n, k in enumerate(order):
        v = np.zeros(m)
        v[k] = 1.0
        for j in range(n):
            v = v - (cols[:, j] @ g @ v) * cols[:, j]
        norm2 = v @ g @ v
        if norm2 <= DEFAULT.eps_pd:
            raise MetricDegenerate("Gram-Schmidt hit a degenerate direction")
        cols[:, n] = v / math.sqrt(norm2)
    return FramePoint(base=x, columns=cols)


def ricci_direction(chart: MetricChart, x, v, tol: Tolerances = DEFAULT) -> float:
    x = chart.require(x)
    vv = _components(v)
    g = chart.metric(x)
    frame = orthonormal_frame(chart, x).columns
    riem = riemann_tensor(chart, x, tol)
    total = 0.0
    for k in range(chart.dim):
        e = frame[:, k]
        rv = np.einsum("abcd,b,c,d->a", riem, vv, e, vv)
        total += float(e @ g @ rv)
    return total


def geodesic_rhs(chart: MetricChart, x: np.ndarray, v: np.ndarray, h_fd: float = DEFAULT.h_fd):
    gam = chart.christoffel(x, h_fd)
    return v, -np.einsum("...kij,...i,...j->...k", gam, v, v)


def integrate_geodesics(chart: MetricChart, x0, v0, n_steps: int, dt: float, h_fd: float = DEFAULT.h_fd):
    """Batched fixed-step RK4 for the geodesic equation; returns (xs, vs) of shape (n+1, ..., m)."""
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    xs = np.empty((n_steps + 1,) + x.shape)
    vs = np.empty_like(xs)
    xs[0], vs[0] = x, v
    for n in range(n_steps):
        k1x, k1v = geodesic_rhs(chart, x, v, h_fd)
        k2x, k2v = geodesic_rhs(chart, x + 0.5 * dt * k1x, v + 0.5 * dt * k1v, h_fd)
        k3x, k3v = geodesic_rhs(chart, x + 0.5 * dt * k2x, v + 0.5 * dt * k2v, h_fd)
        k4x, k4v = geodesic_rhs(chart, x + dt * k3x, v + dt * k3v, h_fd)
        x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        xs[n + 1], vs[n + 1] = x, v
    return xs, vs


@dataclass(frozen=True)
class GeodesicTrace:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    out_of_domain: bool
    speed_drift: float

    @property
    def endpoint(self) -> np.ndarray:
        return self.x[-1]


def _speed(chart: MetricChart, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    g = chart.metric(x)
    return np.sqrt(np.einsum("...i,...ij,...j->...", v, g, v))


def geodesic(chart: MetricChart, x0, v0, t_end: float, step: float = DEFAULT.step,
             tol: Tolerances = DEFAULT) -> GeodesicTrace:
    """Fixed-step RK4 trace of the geodesic through (x0, v0).

    The step is shrunk slightly so that ``t_end`` is hit exactly. If the trace leaves
    the chart it is truncated at the last interior sample and flagged.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x0 = chart.require(x0)
    v0 = np.asarray(_components(v0), dtype=float)
    n = max(1, math.ceil(abs(t_end) / step - 1e-9))
    dt = t_end / n
    xs, vs = [x0], [v0]
    x, v = x0, v0
    flagged = False
    for _ in range(n):
        k1x, k1v = geodesic_rhs(chart, x, v, tol.h_fd)
        k2x, k2v = geodesic_rhs(chart, x + 0.5 * dt * k1x, v + 0.5 * dt * k1v, tol.h_fd)
        k3x, k3v = geodesic_rhs(chart, x + 0.5 * dt * k2x, v + 0.5 * dt * k2v, tol.h_fd)
        k4x, k4v = geodesic_rhs(chart, x + dt * k3x, v + dt * k3v, tol.h_fd)
        x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not chart.contains(x):
            flagged = True
            break
        xs.append(x)
        vs.append(v)
    xs, vs = np.array(xs), np.array(vs)
    ts = dt * np.arange(len(xs))
    speeds = _speed(chart, xs, vs)
    drift = float(np.max(np.abs(speeds - speeds[0])))
    if drift > 10 * tol.tol_speed:
        raise StepTooLarge(f"geodesic speed drift {drift:.3e} exceeds {10 * tol.tol_speed:.1e}")
    return GeodesicTrace(t=ts, x=xs, v=vs, out_of_domain=flagged, speed_drift=drift)
