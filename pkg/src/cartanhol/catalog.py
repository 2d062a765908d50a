"""Chart constructors and the shipped catalog of test manifolds.

Charts are built from JSON-style descriptors::

    {"kind": "sphere", "radius": 1.0}
    {"kind": "cone", "base": {"kind": "circle", "length_factor": 0.5}}
    {"kind": "product", "factors": [{"kind": "flat", "dim": 1}, {"kind": "sphere"}]}
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import ConfigInvalid
from .geometry import MetricChart

INF = math.inf


def _diag(entries: list[np.ndarray]) -> np.ndarray:
    shape = np.broadcast_shapes(*(np.shape(e) for e in entries))
    m = len(entries)
    out = np.zeros(shape + (m, m))
    for k, e in enumerate(entries):
        out[..., k, k] = e
    return out


def flat(dim: int = 2, extent: float = 10.0) -> MetricChart:
    def metric(x):
        return np.broadcast_to(np.eye(dim), np.shape(x)[:-1] + (dim, dim)).copy()

    def gamma(x):
        return np.zeros(np.shape(x)[:-1] + (dim, dim, dim))

    return MetricChart(dim, (-extent,) * dim, (extent,) * dim, metric, gamma,
                       label=f"flat-r{dim}", descriptor={"kind": "flat", "dim": dim, "extent": extent})


def circle(length_factor: float = 1.0) -> MetricChart:
    """Circle of length 2*pi*c in the angle coordinate: g = c^2 dtheta^2."""
    c = float(length_factor)

    def metric(x):
        return np.full(np.shape(x)[:-1] + (1, 1), c * c)

    def gamma(x):
        return np.zeros(np.shape(x)[:-1] + (1, 1, 1))

    return MetricChart(1, (-INF,), (INF,), metric, gamma, label=f"circle(c={c:g})",
                       periods=(2 * math.pi,), descriptor={"kind": "circle", "length_factor": c})


def sphere(radius: float = 1.0, margin: float = 0.02) -> MetricChart:
    """Round 2-sphere in (polar angle, azimuth); the azimuth is periodic."""
    rho2 = float(radius) ** 2

    def metric(x):
        s = np.sin(x[..., 0])
        return _diag([np.full_like(s, rho2), rho2 * s * s])

    def gamma(x):
        th = x[..., 0]
        out = np.zeros(np.shape(x)[:-1] + (2, 2, 2))
        out[..., 0, 1, 1] = -np.sin(th) * np.cos(th)
        cot = np.cos(th) / np.sin(th)
        out[..., 1, 0, 1] = cot
        out[..., 1, 1, 0] = cot
        return out

    return MetricChart(2, (margin, -INF), (math.pi - margin, INF), metric, gamma,
                       label=f"sphere(R={radius:g})", periods=(None, 2 * math.pi),
                       descriptor={"kind": "sphere", "radius": float(radius)})


def hyperbolic(radius: float = 1.0) -> MetricChart:
    """Upper half-plane model, g = R^2 (dx^2 + dy^2) / y^2 (curvature -1/R^2)."""
    rho2 = float(radius) ** 2

    def metric(x):
        y = x[..., 1]
        w = rho2 / (y * y)
        return _diag([w, w])

    def gamma(x):
        inv = 1.0 / x[..., 1]
        out = np.zeros(np.shape(x)[:-1] + (2, 2, 2))
        out[..., 0, 0, 1] = -inv
        out[..., 0, 1, 0] = -inv
        out[..., 1, 0, 0] = inv
        out[..., 1, 1, 1] = -inv
        return out

    return MetricChart(2, (-50.0, 1e-3), (50.0, 1e3), metric, gamma, label=f"hyperbolic(R={radius:g})",
                       descriptor={"kind": "hyperbolic", "radius": float(radius)})


def paraboloid(a: float = 0.5) -> MetricChart:
    """Surface z = a*rho^2 in polar coordinates (rho, phi): a non-cone surface of revolution."""
    a2 = 4.0 * a * a

    def metric(x):
        r = x[..., 0]
        return _diag([1.0 + a2 * r * r, r * r])

    def gamma(x):
        r = x[..., 0]
        w = 1.0 + a2 * r * r
        out = np.zeros(np.shape(x)[:-1] + (2, 2, 2))
        out[..., 0, 0, 0] = a2 * r / w
        out[..., 0, 1, 1] = -r / w
        out[..., 1, 0, 1] = 1.0 / r
        out[..., 1, 1, 0] = 1.0 / r
        return out

    return MetricChart(2, (0.05, -INF), (10.0, INF), metric, gamma, label=f"paraboloid(a={a:g})",
                       periods=(None, 2 * math.pi), descriptor={"kind": "paraboloid", "a": float(a)})


def product(factors: list[MetricChart]) -> MetricChart:
    """Riemannian product; metric and Christoffel symbols are block diagonal."""
    dims = [f.dim for f in factors]
    offsets = np.concatenate([[0], np.cumsum(dims)])
    m = int(offsets[-1])
    analytic = all(f.has_analytic_christoffels for f in factors)

    def metric(x):
        out = np.zeros(np.shape(x)[:-1] + (m, m))
        for f, a, b in zip(factors, offsets[:-1], offsets[1:]):
            out[..., a:b, a:b] = f.metric(x[..., a:b])
        return out

    def gamma(x):
        out = np.zeros(np.shape(x)[:-1] + (m, m, m))
        for f, a, b in zip(factors, offsets[:-1], offsets[1:]):
            out[..., a:b, a:b, a:b] = f.christoffel(x[..., a:b])
        return out

    return MetricChart(
        m,
        tuple(v for f in factors for v in f.lower),
        tuple(v for f in factors for v in f.upper),
        metric,
        gamma if analytic else None,
        label=" x ".join(f.label for f in factors),
        periods=tuple(p for f in factors for p in f.periods),
        descriptor={"kind": "product", "factors": [f.descriptor for f in factors]},
    )


def custom(dim: int, metric: list, lower, upper, periods=None, coords=None, label="custom") -> MetricChart:
    """Metric given as a matrix of expression strings in the coordinates ``coords``.

    Christoffel symbols are left to finite differences.
    """
    import sympy

    names = coords or [f"x{k}" for k in range(dim)]
    if len(names) != dim or len(metric) != dim or any(len(row) != dim for row in metric):
        raise ConfigInvalid("custom metric must be a dim x dim matrix with dim coordinate names")
    symbols = sympy.symbols(names)
    funcs: list[list[Callable]] = [
        [sympy.lambdify(symbols, sympy.sympify(str(e)), "numpy") for e in row] for row in metric
    ]

    def metric_fn(x):
        args = [x[..., k] for k in range(dim)]
        shape = np.shape(x)[:-1]
        out = np.empty(shape + (dim, dim))
        for i in range(dim):
            for j in range(dim):
                out[..., i, j] = np.broadcast_to(funcs[i][j](*args), shape)
        return out

    periods = tuple(periods) if periods else (None,) * dim
    low = tuple(-INF if v is None else float(v) for v in lower)
    high = tuple(INF if v is None else float(v) for v in upper)
    return MetricChart(dim, low, high, metric_fn, None, label=label, periods=periods,
                       descriptor={"kind": "custom", "dim": dim, "metric": metric, "lower": list(lower),
                                   "upper": list(upper), "periods": list(periods), "coords": names})


def chart_from_descriptor(desc: dict) -> MetricChart:
    from .cones import make_cone

    if not isinstance(desc, dict) or "kind" not in desc:
        raise ConfigInvalid(f"manifold descriptor needs a 'kind': {desc!r}")
    kind = desc["kind"]
    try:
        if kind == "flat":
            return flat(int(desc.get("dim", 2)), float(desc.get("extent", 10.0)))
        if kind == "circle":
            return circle(float(desc.get("length_factor", 1.0)))
        if kind == "sphere":
            return sphere(float(desc.get("radius", 1.0)))
        if kind == "hyperbolic":
            return hyperbolic(float(desc.get("radius", 1.0)))
        if kind == "paraboloid":
            return paraboloid(float(desc.get("a", 0.5)))
        if kind == "cone":
            base = chart_from_descriptor(desc["base"])
            return make_cone(base, float(desc.get("r_min", 0.05)), float(desc.get("r_max", 5.0)))
        if kind == "product":
            return product([chart_from_descriptor(f) for f in desc["factors"]])
        if kind == "custom":
            return custom(int(desc["dim"]), desc["metric"], desc["lower"], desc["upper"],
                          desc.get("periods"), desc.get("coords"), desc.get("label", "custom"))
    except KeyError as exc:
        raise ConfigInvalid(f"descriptor of kind {kind!r} is missing {exc}") from None
    raise ConfigInvalid(f"unknown manifold kind {kind!r}")


HALF_PI = math.pi / 2

# name -> (descriptor, base point, short description)
CATALOG: dict[str, tuple[dict, list[float], str]] = {
    "flat-r2": ({"kind": "flat", "dim": 2}, [0.3, -0.2], "Euclidean plane, Cartesian"),
    "flat-r3": ({"kind": "flat", "dim": 3}, [0.3, -0.2, 0.1], "Euclidean 3-space, Cartesian"),
    "sphere-s2": ({"kind": "sphere", "radius": 1.0}, [HALF_PI, 0.0], "unit 2-sphere"),
    "sphere-s2-scaled": ({"kind": "sphere", "radius": 2.0}, [HALF_PI, 0.0], "2-sphere of radius 2"),
    "hyperbolic-h2": ({"kind": "hyperbolic", "radius": 1.0}, [0.0, 1.0], "hyperbolic plane, half-plane model"),
    "cone-circle": (
        {"kind": "cone", "base": {"kind": "circle", "length_factor": 0.5}, "r_min": 0.05, "r_max": 5.0},
        [1.0, 0.0], "flat cone over a circle of length pi",
    ),
    "cone-sphere": (
        {"kind": "cone", "base": {"kind": "sphere", "radius": 0.8}, "r_min": 0.05, "r_max": 5.0},
        [1.0, HALF_PI, 0.0], "cone over the 2-sphere of radius 0.8",
    ),
    "cone-product": (
        {"kind": "product", "factors": [
            {"kind": "cone", "base": {"kind": "circle", "length_factor": 0.5}, "r_min": 0.05, "r_max": 5.0},
            {"kind": "cone", "base": {"kind": "circle", "length_factor": 0.7}, "r_min": 0.05, "r_max": 5.0},
        ]},
        [1.0, 0.0, 1.0, 0.0], "product of two 2D cones",
    ),
    "flat-sphere": (
        {"kind": "product", "factors": [{"kind": "flat", "dim": 1}, {"kind": "sphere", "radius": 1.0}]},
        [0.0, HALF_PI, 0.0], "line times unit sphere",
    ),
    "paraboloid": ({"kind": "paraboloid", "a": 0.5}, [1.0, 0.0], "paraboloid of revolution"),
}


def catalog_entry(name: str) -> tuple[MetricChart, np.ndarray]:
    try:
        desc, base, _ = CATALOG[name]
    except KeyError:
        raise ConfigInvalid(f"unknown catalog manifold {name!r}") from None
    chart = chart_from_descriptor(desc)
    return chart, np.array(base, dtype=float)
