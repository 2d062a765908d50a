"""Affine isometries (A, b) of R^m, affine frames and the bundle maps between them.

Composition follows the block-matrix product of ``[[A, b], [0, 1]]``:
``compose(h2, h1)`` applies ``h1`` first.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptySample,
    NonOrthogonalLinearPart,
    SingularFrame,
    SingularLinearPart,
)
from .tolerances import DEFAULT, Tolerances


@dataclass(frozen=True, eq=False)
class AffineIsometry:
    linear: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        A = np.array(self.linear, dtype=float)
        b = np.array(self.translation, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape != (b.size, b.size):
            raise DimensionMismatch(f"linear part {A.shape} does not match translation {b.shape}")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "linear", A)
        object.__setattr__(self, "translation", b)

    @property
    def dim(self) -> int:
        return self.translation.size

    @classmethod
    def identity(cls, m: int) -> "AffineIsometry":
        return cls(np.eye(m), np.zeros(m))

    @classmethod
    def translation_by(cls, b) -> "AffineIsometry":
        b = np.asarray(b, dtype=float)
        return cls(np.eye(b.size), b)

    def inverse(self) -> "AffineIsometry":
        try:
            Ainv = np.linalg.inv(self.linear)
        except np.linalg.LinAlgError:
            raise SingularLinearPart("linear part is singular") from None
        return AffineIsometry(Ainv, -Ainv @ self.translation)

    def matrix(self) -> np.ndarray:
        m = self.dim
        out = np.eye(m + 1)
        out[:m, :m] = self.linear
        out[:m, m] = self.translation
        return out

    def distance_to_identity(self) -> float:
        return max(float(np.max(np.abs(self.linear - np.eye(self.dim)), initial=0.0)),
                   float(np.max(np.abs(self.translation), initial=0.0)))

    def orthogonality_defect(self) -> float:
        A = self.linear
        return float(np.max(np.abs(A.T @ A - np.eye(self.dim)), initial=0.0))

    def conjugate(self, frame_change: np.ndarray) -> "AffineIsometry":
        """Express in new coordinates y = C^{-1} x, i.e. (C^{-1} A C, C^{-1} b)."""
        C = np.asarray(frame_change, dtype=float)
        Cinv = np.linalg.inv(C)
        return AffineIsometry(Cinv @ self.linear @ C, Cinv @ self.translation)

    def restrict(self, basis: np.ndarray) -> "AffineIsometry":
        """Compress onto the span of the orthonormal columns of ``basis``."""
        return AffineIsometry(basis.T @ self.linear @ basis, basis.T @ self.translation)

    def to_json(self) -> dict:
        return {"A": self.linear.tolist(), "b": self.translation.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "AffineIsometry":
        return cls(np.array(data["A"], dtype=float), np.array(data["b"], dtype=float))

    def __repr__(self):
        return f"AffineIsometry(A={self.linear.tolist()}, b={self.translation.tolist()})"


def _same_dim(*hs: AffineIsometry) -> int:
    dims = {h.dim for h in hs}
    if len(dims) != 1:
        raise DimensionMismatch(f"dimensions differ: {sorted(dims)}")
    return dims.pop()


def compose(h2: AffineIsometry, h1: AffineIsometry) -> AffineIsometry:
    """h2 after h1: (A2 A1, A2 b1 + b2)."""
    _same_dim(h2, h1)
    return AffineIsometry(h2.linear @ h1.linear, h2.linear @ h1.translation + h2.translation)


def act_affine(h: AffineIsometry, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != h.dim:
        raise DimensionMismatch(f"vector of size {v.shape[-1]} for a {h.dim}-dimensional map")
    return v @ h.linear.T + h.translation


@dataclass(frozen=True, eq=False)
class AffineFrame:
    """Affine frame (p, u): a point of the affine tangent space plus a linear frame."""

    point: np.ndarray
    frame: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.point, dtype=float).reshape(-1)
        u = np.asarray(self.frame, dtype=float)
        if u.shape != (p.size, p.size):
            raise DimensionMismatch("frame and point dimensions differ")
        if abs(np.linalg.det(u)) <= DEFAULT.eps_frame:
            raise SingularFrame("affine frame has a singular linear frame")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "frame", u)


def frame_right_action(af: AffineFrame, g: AffineIsometry) -> AffineFrame:
    """(p, u) . (A, b) = (p + u b, u A)."""
    if af.point.size != g.dim:
        raise DimensionMismatch("frame and group element dimensions differ")
    return AffineFrame(af.point + af.frame @ g.translation, af.frame @ g.linear)


def product_right_action(u, v, g: AffineIsometry) -> tuple[np.ndarray, np.ndarray]:
    """Right action on L(M) x R^m: (u, v) . (a, xi) = (u a, a^{-1} v - a^{-1} xi)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.size != g.dim or u.shape != (g.dim, g.dim):
        raise DimensionMismatch("product element and group element dimensions differ")
    try:
        ainv_v, ainv_xi = np.linalg.solve(g.linear, np.stack([v, g.translation], axis=1)).T
    except np.linalg.LinAlgError:
        raise SingularLinearPart("linear part is singular") from None
    return u @ g.linear, ainv_v - ainv_xi


def frame_to_product(af: AffineFrame) -> tuple[np.ndarray, np.ndarray]:
    """Affine frames to L(M) x R^m: (p, u) -> (u, u^{-1}(o - p)) with o the origin."""
    try:
        return af.frame, -np.linalg.solve(af.frame, af.point)
    except np.linalg.LinAlgError:
        raise SingularFrame("frame is singular") from None


def product_to_frame(u, v) -> AffineFrame:
    """Inverse of :func:`frame_to_product`: (u, v) -> (-u v, u)."""
    u = np.asarray(u, dtype=float)
    return AffineFrame(-u @ np.asarray(v, dtype=float), u)


def extended_to_product(u, g: AffineIsometry) -> tuple[np.ndarray, np.ndarray]:
    """L(M) x A(m) -> L(M) x R^m, (u, (a, xi)) -> (u a, -a^{-1} xi).

    Constant on GL(m)-orbits (u s, s^{-1} g), so it descends to the extended bundle.
    """
    u = np.asarray(u, dtype=float)
    try:
        return u @ g.linear, -np.linalg.solve(g.linear, g.translation)
    except np.linalg.LinAlgError:
        raise SingularLinearPart("linear part is singular") from None


def extended_gl_action(u, g: AffineIsometry, s) -> tuple[np.ndarray, AffineIsometry]:
    """(u, g) -> (u s, s^{-1} g): the GL(m) action whose quotient is the extended bundle."""
    s = np.asarray(s, dtype=float)
    sinv = np.linalg.inv(s)
    return np.asarray(u, dtype=float) @ s, AffineIsometry(sinv @ g.linear, sinv @ g.translation)


def extended_to_frame(u, g: AffineIsometry) -> AffineFrame:
    """Extended bundle -> affine frames, the composite of the two product identifications."""
    return product_to_frame(*extended_to_product(u, g))


def include_frame(u) -> tuple[np.ndarray, AffineIsometry]:
    """Linear frames into the extended bundle: u -> [(u, Id)]."""
    u = np.asarray(u, dtype=float)
    return u, AffineIsometry.identity(u.shape[0])


def frame_projection(af: AffineFrame) -> np.ndarray:
    """Affine frames -> linear frames, (p, u) -> u."""
    return af.frame


class FixedPointVerdict(str, enum.Enum):
    FIXED_POINT = "FIXED_POINT"
    NO_FIXED_POINT = "NO_FIXED_POINT"
    DEGENERATE = "DEGENERATE"


class Compactness(str, enum.Enum):
    TRIVIAL = "TRIVIAL"
    COMPACT = "COMPACT"
    NONCOMPACT = "NONCOMPACT"


@dataclass(frozen=True)
class FixedPointResult:
    point: np.ndarray
    residual: float
    verdict: FixedPointVerdict
    scale: float
    singular_values: np.ndarray

    def to_json(self) -> dict:
        return {"point": self.point.tolist(), "residual": self.residual,
                "verdict": self.verdict.value, "scale": self.scale}


def solve_fixed_point(samples: Sequence[AffineIsometry], tol: Tolerances = DEFAULT) -> FixedPointResult:
    """Least-squares common fixed point of the samples.

    Minimises sum ||(I - A_i) p - b_i||^2 through ridge-regularised normal equations.
    The residual is the RMS of the per-sample defects at the minimiser.
    """
    samples = list(samples)
    if not samples:
        raise EmptySample("no samples")
    m = _same_dim(*samples)
    eye = np.eye(m)
    stacked = np.concatenate([eye - h.linear for h in samples], axis=0)
    rhs = np.concatenate([h.translation for h in samples])
    normal = stacked.T @ stacked + tol.eps_ridge * eye
    p = np.linalg.solve(normal, stacked.T @ rhs)
    defects = (stacked @ p - rhs).reshape(len(samples), m)
    residual = float(np.sqrt(np.mean(np.sum(defects**2, axis=1))))
    scale = max(1.0, max(float(np.linalg.norm(h.translation)) for h in samples))
    sv = np.linalg.svd(stacked, compute_uv=False)
    if residual >= tol.tol_fp * scale:
        verdict = FixedPointVerdict.NO_FIXED_POINT
    elif sv.size < m or sv[-1] <= tol.tol_trivial:
        verdict = FixedPointVerdict.DEGENERATE
    else:
        verdict = FixedPointVerdict.FIXED_POINT
    return FixedPointResult(point=p, residual=residual, verdict=verdict, scale=scale, singular_values=sv)


def check_orthogonal(samples: Sequence[AffineIsometry], tol: Tolerances = DEFAULT) -> None:
    for k, h in enumerate(samples):
        if h.orthogonality_defect() > tol.tol_orth:
            raise NonOrthogonalLinearPart(
                f"sample {k}: ||A^T A - I|| = {h.orthogonality_defect():.2e} > {tol.tol_orth:.0e}")


def is_trivial(samples: Sequence[AffineIsometry], tol: Tolerances = DEFAULT) -> bool:
    return all(h.distance_to_identity() <= tol.tol_trivial for h in samples)


def compactness_verdict(samples: Sequence[AffineIsometry], tol: Tolerances = DEFAULT) -> Compactness:
    """Orthogonal linear parts with a common fixed point generate a relatively compact group."""
    samples = list(samples)
    check_orthogonal(samples, tol)
    if is_trivial(samples, tol):
        return Compactness.TRIVIAL
    fp = solve_fixed_point(samples, tol)
    if fp.verdict is FixedPointVerdict.NO_FIXED_POINT:
        return Compactness.NONCOMPACT
    return Compactness.COMPACT
