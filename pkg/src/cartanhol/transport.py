"""Parallel transport and affine development along curves in a chart.

Along a curve the pair (Q, C) is integrated, where Q(t) sends a vector at gamma(t)
to the frame coordinates of its parallel transport back to the base point and C(t)
is the development of the curve in the initial affine tangent space. Packed as
Z = [[Q, C], [0, 1]] this is the linear system

    Z' = Z N(t),   N = [[G, gamma'], [0, 0]],   G^k_j = Gamma^k_ij gamma'^i,

so each RK4 step is a fixed (m+1) x (m+1) matrix that can be formed for all steps
at once from the Christoffel symbols sampled along the curve.

A loop's holonomy is reported as the affine map p -> P (p - C(1)) of the initial
affine tangent space, P the linear holonomy. It is a homomorphism for concatenation:
the loop "g1 then g2" has holonomy compose(H(g2), H(g1)).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .affine import AffineIsometry
from .errors import NonClosedCurve, OutOfDomain, StepTooLarge
from .geometry import FramePoint, MetricChart, TangentVector, integrate_geodesics, orthonormal_frame
from .tolerances import DEFAULT, Tolerances

COORD_RECT = "COORD_RECT"
GEODESIC_POLYGON = "GEODESIC_POLYGON"
PARAM_CURVE = "PARAM_CURVE"
CONCAT = "CONCAT"


@dataclass(frozen=True, eq=False)
class LoopSpec:
    """A closed (or, for traces, open) curve based at ``base``.

    kinds and their params:
      COORD_RECT        i, j, eps (and optional eps_j): coordinate rectangle with a corner at base
      GEODESIC_POLYGON  directions (unit vectors in base-frame coordinates), side
      PARAM_CURVE       one of: points; axis (+ turns) for a periodic-coordinate circuit;
                        fn (+ dfn) callables on [0, 1]
      CONCAT            loops, repeat
    """

    base: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)
    orientation: int = 1
    closed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float))
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        if self.kind not in (COORD_RECT, GEODESIC_POLYGON, PARAM_CURVE, CONCAT):
            raise ValueError(f"unknown loop kind {self.kind!r}")

    @classmethod
    def rect(cls, base, i: int, j: int, eps: float, eps_j: float | None = None, orientation: int = 1):
        return cls(base, COORD_RECT, {"i": int(i), "j": int(j), "eps": float(eps),
                                      "eps_j": float(eps if eps_j is None else eps_j)}, orientation)

    @classmethod
    def polygon(cls, base, directions, side: float, orientation: int = 1):
        dirs = [list(map(float, d)) for d in directions]
        return cls(base, GEODESIC_POLYGON, {"directions": dirs, "side": float(side)}, orientation)

    @classmethod
    def circuit(cls, base, axis: int, turns: float = 1.0, orientation: int = 1):
        closed = float(turns).is_integer()
        return cls(base, PARAM_CURVE, {"axis": int(axis), "turns": float(turns)}, orientation, closed)

    @classmethod
    def from_points(cls, points, closed: bool = True, orientation: int = 1):
        pts = np.asarray(points, dtype=float)
        return cls(pts[0], PARAM_CURVE, {"points": pts.tolist()}, orientation, closed)

    @classmethod
    def from_function(cls, fn: Callable, dfn: Callable | None = None, closed: bool = True,
                      orientation: int = 1, label: str = "function"):
        base = np.asarray(fn(np.array([0.0]))[0], dtype=float)
        return cls(base, PARAM_CURVE, {"fn": fn, "dfn": dfn, "label": label}, orientation, closed)

    @classmethod
    def concat(cls, loops: Sequence["LoopSpec"], repeat: int = 1):
        loops = list(loops)
        return cls(loops[0].base, CONCAT, {"loops": loops, "repeat": int(repeat)}, 1,
                   all(lp.closed for lp in loops))

    def reversed(self) -> "LoopSpec":
        return LoopSpec(self.base, self.kind, self.params, -self.orientation, self.closed)

    def to_json(self) -> dict:
        params = {}
        for k, v in self.params.items():
            if k == "loops":
                params[k] = [lp.to_json() for lp in v]
            elif callable(v) or v is None:
                continue
            else:
                params[k] = v
        return {"kind": self.kind, "base": self.base.tolist(), "params": params,
                "orientation": self.orientation}

    @classmethod
    def from_json(cls, data: dict) -> "LoopSpec":
        params = dict(data.get("params", {}))
        kind = data["kind"]
        if kind == CONCAT:
            params["loops"] = [cls.from_json(d) for d in params["loops"]]
            params.setdefault("repeat", 1)
        if kind == COORD_RECT:
            params.setdefault("eps_j", params["eps"])
        closed = data.get("closed", True)
        if kind == PARAM_CURVE and "axis" in params:
            params.setdefault("turns", 1.0)
            closed = data.get("closed", float(params["turns"]).is_integer())
        base = data.get("base")
        if base is None and kind == PARAM_CURVE and "points" in params:
            base = params["points"][0]
        return cls(base, kind, params, int(data.get("orientation", 1)), closed)


@dataclass
class Path:
    """A curve discretised for RK4: per segment, samples at the 2n+1 stage points."""

    positions: list[np.ndarray]
    velocities: list[np.ndarray]
    durations: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.durations:
            self.durations = [1.0 / len(self.positions)] * len(self.positions)

    @property
    def start(self) -> np.ndarray:
        return self.positions[0][0]

    @property
    def end(self) -> np.ndarray:
        return self.positions[-1][-1]

    def reversed(self) -> "Path":
        return Path([p[::-1] for p in reversed(self.positions)],
                    [-v[::-1] for v in reversed(self.velocities)], self.durations[::-1])

    def __add__(self, other: "Path") -> "Path":
        return Path(self.positions + other.positions, self.velocities + other.velocities,
                    self.durations + other.durations)


def _steps_for(duration: float, step: float) -> int:
    return max(1, math.ceil(duration / step - 1e-9))


def _line(a: np.ndarray, b: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    s = np.linspace(0.0, 1.0, 2 * n + 1)[:, None]
    return a + s * (b - a), np.broadcast_to(b - a, (2 * n + 1, a.size)).copy()


def _geodesic_samples(chart: MetricChart, x0, v0, n: int, tol: Tolerances):
    xs, vs = integrate_geodesics(chart, x0, v0, 2 * n, 1.0 / (2 * n), tol.h_fd)
    return xs, vs


def shoot_geodesic(chart: MetricChart, start, target, n: int, tol: Tolerances = DEFAULT,
                   guess=None, max_iter: int = 30):
    """Initial velocity of the unit-time geodesic from ``start`` to ``target``.

    Newton iteration on the discrete RK4 exponential map (2n steps). The Jacobian is
    formed by central differences on a coarse discretisation, where the full Newton
    solve also happens; the fine discretisation is then polished with that Jacobian.
    """
    start = np.asarray(start, dtype=float)
    target = np.asarray(target, dtype=float)
    m = start.size
    v = (target - start) if guess is None else np.asarray(guess, dtype=float)
    delta = 1e-6
    perturb = np.concatenate([np.zeros((1, m)), delta * np.eye(m), -delta * np.eye(m)])
    coarse = min(n, 16)
    jac = None
    for level in (coarse, n):
        for it in range(max_iter):
            if jac is None or level == coarse:
                vs0 = v + perturb
                xs, _ = integrate_geodesics(chart, np.broadcast_to(start, vs0.shape), vs0, 2 * level,
                                            1.0 / (2 * level), tol.h_fd)
                ends = xs[-1]
                jac = (ends[1:m + 1] - ends[m + 1:]).T / (2 * delta)
                end = ends[0]
            else:
                end = integrate_geodesics(chart, start, v, 2 * level, 1.0 / (2 * level), tol.h_fd)[0][-1]
            miss = end - target
            if np.max(np.abs(miss)) < 1e-14 or (it > 0 and np.max(np.abs(miss)) < 1e-13):
                break
            v = v - np.linalg.solve(jac, miss)
        if level == n:
            break
    if np.max(np.abs(miss)) > 1e-11:
        raise StepTooLarge("geodesic shooting did not converge")
    return v


def _loop_path(chart: MetricChart, loop: LoopSpec, step: float, frame: np.ndarray, tol: Tolerances) -> Path:
    x = loop.base
    kind, prm = loop.kind, loop.params
    if kind == CONCAT:
        path = None
        for _ in range(prm.get("repeat", 1)):
            for sub in prm["loops"]:
                part = _loop_path(chart, sub, step, frame, tol)
                path = part if path is None else path + part
    elif kind == COORD_RECT:
        i, j = prm["i"], prm["j"]
        di = np.zeros(x.size)
        dj = np.zeros(x.size)
        di[i] = prm["eps"]
        dj[j] = prm["eps_j"]
        corners = [x, x + di, x + di + dj, x + dj, x]
        n = _steps_for(0.25, step)
        segs = [_line(a, b, n) for a, b in zip(corners[:-1], corners[1:])]
        path = Path([s[0] for s in segs], [s[1] for s in segs], [0.25] * 4)
    elif kind == GEODESIC_POLYGON:
        dirs = np.asarray(prm["directions"], dtype=float)
        side = prm["side"]
        n = _steps_for(1.0 / (len(dirs) + 1), step)
        vels = side * (dirs / np.linalg.norm(dirs, axis=1, keepdims=True)) @ frame.T
        radial = [_geodesic_samples(chart, x, v, n, tol) for v in (vels[0], vels[-1])]
        positions, velocities = [radial[0][0]], [radial[0][1]]
        vertex = radial[0][0][-1]
        for k in range(1, len(dirs)):
            target = (_geodesic_samples(chart, x, vels[k], n, tol)[0][-1]
                      if k < len(dirs) - 1 else radial[1][0][-1])
            v0 = shoot_geodesic(chart, vertex, target, n, tol)
            xs, vs = _geodesic_samples(chart, vertex, v0, n, tol)
            positions.append(xs)
            velocities.append(vs)
            vertex = target
        positions.append(radial[1][0][::-1])
        velocities.append(-radial[1][1][::-1])
        path = Path(positions, velocities, [1.0 / (len(dirs) + 1)] * len(positions))
    elif kind == PARAM_CURVE and "points" in prm:
        path = _spline_path(chart, np.asarray(prm["points"], dtype=float), step, loop.closed)
    elif kind == PARAM_CURVE:
        n = _steps_for(1.0, step)
        s = np.linspace(0.0, 1.0, 2 * n + 1)
        if "axis" in prm:
            d = np.zeros(x.size)
            period = chart.periods[prm["axis"]]
            if period is None:
                raise ValueError(f"coordinate {prm['axis']} is not periodic")
            d[prm["axis"]] = prm.get("turns", 1.0) * period
            pos, vel = x + s[:, None] * d, np.broadcast_to(d, (s.size, x.size)).copy()
        else:
            fn, dfn = prm["fn"], prm.get("dfn")
            pos = np.asarray(fn(s), dtype=float)
            if dfn is None:
                h = 1e-6
                vel = (np.asarray(fn(s + h)) - np.asarray(fn(s - h))) / (2 * h)
            else:
                vel = np.asarray(dfn(s), dtype=float)
        path = Path([pos], [vel], [1.0])
    else:  # pragma: no cover - guarded in LoopSpec
        raise ValueError(kind)
    return path.reversed() if loop.orientation == -1 else path


def _spline_path(chart: MetricChart, pts: np.ndarray, step: float, closed: bool) -> Path:
    """Cubic spline through sample points, parametrised by cumulative chord length on [0, 1].

    Each spline piece becomes its own segment so that every RK4 step sees a single cubic.
    """
    pts = pts.copy()
    for k, p in enumerate(chart.periods):
        if p is not None:  # unwrap periodic coordinates
            pts[:, k] = np.unwrap(pts[:, k], period=p)
    if closed and not chart.close_to(pts[0], pts[-1], 1e-12):
        raise NonClosedCurve("sampled curve does not close")
    shift = np.zeros(pts.shape[1])
    if closed:
        for k, p in enumerate(chart.periods):
            if p is not None:
                shift[k] = p * np.round((pts[-1, k] - pts[0, k]) / p)
        pts[-1] = pts[0] + shift
    chord = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    u = np.concatenate([[0.0], np.cumsum(chord)])
    u /= u[-1]
    if closed:
        spline = CubicSpline(u, pts - u[:, None] * shift, bc_type="periodic")
    else:
        spline = CubicSpline(u, pts, bc_type="natural")
    positions, velocities, durations = [], [], []
    for a, b in zip(u[:-1], u[1:]):
        s = np.linspace(a, b, 2 * _steps_for(b - a, step) + 1)
        positions.append(spline(s) + s[:, None] * shift)
        velocities.append((spline(s, 1) + shift) * (b - a))  # segments run over a unit parameter
        durations.append(float(b - a))
    positions[-1][-1] = pts[-1]  # exact closure despite rounding in the spline
    return Path(positions, velocities, durations)


def _step_matrices(chart: MetricChart, pos: np.ndarray, vel: np.ndarray, tol: Tolerances) -> np.ndarray:
    """RK4 propagators Phi_k for Z' = Z N over one segment sampled at 2n+1 stage points."""
    m = pos.shape[1]
    n = (pos.shape[0] - 1) // 2
    if not np.all(chart.contains(pos)):
        raise OutOfDomain(f"{chart.label}: curve leaves the chart domain")
    gam = chart.christoffel(pos, tol.h_fd)
    N = np.zeros((pos.shape[0], m + 1, m + 1))
    N[:, :m, :m] = np.einsum("pkij,pi->pkj", gam, vel)
    N[:, :m, m] = vel
    dt = 1.0 / n
    eye = np.eye(m + 1)
    n0, nh, n1 = N[0:-1:2], N[1::2], N[2::2]
    k1 = n0
    k2 = (eye + 0.5 * dt * k1) @ nh
    k3 = (eye + 0.5 * dt * k2) @ nh
    k4 = (eye + dt * k3) @ n1
    return eye + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _ordered_product(mats: np.ndarray) -> np.ndarray:
    """M_0 M_1 ... M_{k-1} by pairwise reduction (deterministic order)."""
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            mats = np.concatenate([mats, np.eye(mats.shape[1])[None]])
        mats = mats[0::2] @ mats[1::2]
    return mats[0]


def _propagate(chart: MetricChart, path: Path, tol: Tolerances) -> np.ndarray:
    total = None
    for pos, vel in zip(path.positions, path.velocities):
        seg = _ordered_product(_step_matrices(chart, pos, vel, tol))
        total = seg if total is None else total @ seg
    return total


def base_frame(chart: MetricChart, x, frame0: FramePoint | np.ndarray | None) -> np.ndarray:
    if frame0 is None:
        return orthonormal_frame(chart, x).columns
    return np.asarray(getattr(frame0, "columns", frame0), dtype=float)


def _frame_defect(chart: MetricChart, x: np.ndarray, E: np.ndarray) -> float:
    g = chart.metric(x)
    return float(np.max(np.abs(E.T @ g @ E - np.eye(E.shape[1]))))


def develop_loop(chart: MetricChart, loop: LoopSpec, frame0=None, step: float | None = None,
                 tol: Tolerances = DEFAULT) -> AffineIsometry:
    """Affine holonomy of ``loop`` in the coordinates of the orthonormal frame ``frame0``."""
    step = tol.step if step is None else step
    x = chart.require(loop.base)
    E0 = base_frame(chart, x, frame0)
    if _frame_defect(chart, x, E0) > tol.tol_orth:
        raise ValueError("frame0 must be g-orthonormal at the base point")
    path = _loop_path(chart, loop, step, E0, tol)
    if not chart.close_to(path.start, path.end, 1e-12) or not chart.close_to(path.start, x, 1e-12):
        raise NonClosedCurve("loop does not return to its base point")
    Z = _propagate(chart, path, tol)
    m = chart.dim
    back = np.linalg.solve(E0, Z[:m, :m]) @ E0  # Q(1) expressed in frame0 coordinates
    dev = np.linalg.solve(E0, Z[:m, m])
    P = np.linalg.inv(back)
    h = AffineIsometry(P, -P @ dev)
    if h.orthogonality_defect() > tol.tol_orth:
        raise StepTooLarge(f"transported frame lost orthonormality ({h.orthogonality_defect():.2e})")
    return h


def transport_linear(chart: MetricChart, curve: LoopSpec, v0, step: float | None = None,
                     tol: Tolerances = DEFAULT) -> TangentVector:
    """Levi-Civita parallel transport of ``v0`` (chart components at the start) to the curve's end."""
    step = tol.step if step is None else step
    x = chart.require(curve.base)
    v0 = np.asarray(getattr(v0, "components", v0), dtype=float)
    E0 = base_frame(chart, x, None)
    path = _loop_path(chart, curve, step, E0, tol)
    Z = _propagate(chart, path, tol)
    m = chart.dim
    w = np.linalg.solve(Z[:m, :m], v0)
    g0, g1 = chart.metric(path.start), chart.metric(path.end)
    n0, n1 = math.sqrt(v0 @ g0 @ v0), math.sqrt(w @ g1 @ w)
    if abs(n1 - n0) > tol.tol_speed * max(1.0, n0):
        raise StepTooLarge(f"transport changed the norm by {abs(n1 - n0):.2e}")
    return TangentVector(base=path.end.copy(), components=w)


@dataclass(frozen=True)
class DevelopmentTrace:
    t: np.ndarray
    dev: np.ndarray
    pos: np.ndarray

    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.dev, axis=0), axis=1)))

    def to_csv(self) -> str:
        m = self.dev.shape[1]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t"] + [f"dev_{k + 1}" for k in range(m)] + [f"pos_{k + 1}" for k in range(m)])
        for t, d, p in zip(self.t, self.dev, self.pos):
            writer.writerow([format(float(v), ".17g") for v in (t, *d, *p)])
        return buf.getvalue()


def development_trace(chart: MetricChart, curve: LoopSpec, frame0=None, step: float | None = None,
                      tol: Tolerances = DEFAULT) -> DevelopmentTrace:
    """Development of the curve in the initial affine tangent space, one row per RK4 step."""
    step = tol.step if step is None else step
    x = chart.require(curve.base)
    E0 = base_frame(chart, x, frame0)
    path = _loop_path(chart, curve, step, E0, tol)
    m = chart.dim
    Z = np.eye(m + 1)
    ts, devs, poss = [0.0], [np.zeros(m)], [path.start.copy()]
    t = 0.0
    for seg, (pos, vel) in enumerate(zip(path.positions, path.velocities)):
        mats = _step_matrices(chart, pos, vel, tol)
        n = mats.shape[0]
        seg_len = path.durations[seg]
        for k in range(n):
            Z = Z @ mats[k]
            t += seg_len / n
            ts.append(t)
            devs.append(np.linalg.solve(E0, Z[:m, m]))
            poss.append(pos[2 * k + 2])
    return DevelopmentTrace(np.array(ts), np.array(devs), np.array(poss))


@dataclass(frozen=True)
class LoopFamilyEntry:
    eps: float
    element: AffineIsometry
    linear_defect: float
    translation_norm: float


def small_loop_family(chart: MetricChart, x, eps_list: Sequence[float], plane: tuple[int, int],
                      frame0=None, step: float | None = None, tol: Tolerances = DEFAULT) -> list[LoopFamilyEntry]:
    """Coordinate squares of side eps in ``plane`` with the diagnostics (||A - I||_2, ||b||)."""
    i, j = plane
    out = []
    for eps in eps_list:
        h = develop_loop(chart, LoopSpec.rect(x, i, j, eps), frame0, step, tol)
        out.append(LoopFamilyEntry(float(eps), h,
                                   float(np.linalg.norm(h.linear - np.eye(h.dim), 2)),
                                   float(np.linalg.norm(h.translation))))
    return out


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float)), 1)[0])
