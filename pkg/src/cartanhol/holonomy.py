"""Sampling of affine holonomy, de Rham splitting and the compact/semidirect classification."""

from __future__ import annotations

import enum
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .affine import (
    AffineIsometry,
    Compactness,
    FixedPointVerdict,
    check_orthogonal,
    compactness_verdict,
    solve_fixed_point,
)
from .errors import EmptySample, ToleranceAmbiguity
from .geometry import FramePoint, MetricChart, orthonormal_frame
from .tolerances import DEFAULT, Tolerances
from .transport import LoopSpec, develop_loop


@dataclass(frozen=True)
class Protocol:
    """Which loops make up a holonomy sample.

    Coordinate rectangles in every coordinate plane (or the first ``n_planes``) for each
    side length in ``eps_list`` and each sign quadrant, one circuit per periodic
    coordinate, and ``n_random_polygons`` seeded geodesic polygons.
    """

    eps_list: tuple = (0.05, 0.1, 0.2)
    n_planes: Optional[int] = None
    quadrants: bool = True
    circuits: bool = True
    n_random_polygons: int = 4
    polygon_vertices: int = 2
    polygon_side: float = 0.3
    seed: int = 0
    step: Optional[float] = None
    workers: int = 1

    def as_dict(self) -> dict:
        d = asdict(self)
        d["eps_list"] = list(self.eps_list)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "Protocol":
        data = dict(data)
        if "eps_list" in data:
            data["eps_list"] = tuple(float(e) for e in data["eps_list"])
        return cls(**data)

    def replace(self, **changes) -> "Protocol":
        return Protocol.from_dict({**self.as_dict(), **changes})


SAMPLING_NOTE = ("Finite sample of loops inside a fixed eps-neighbourhood of the base point. It stands in for "
                 "the local holonomy group, which is an intersection over all neighbourhoods and is not "
                 "finitely computable.")


@dataclass(frozen=True)
class HolonomySample:
    base: np.ndarray
    elements: list
    loops: list
    frame: FramePoint

    def __post_init__(self):
        if len({h.dim for h in self.elements}) > 1:
            raise ValueError("sample elements differ in dimension")

    @property
    def linear_parts(self) -> list[np.ndarray]:
        return [h.linear for h in self.elements]

    def to_json(self) -> dict:
        return {
            "base": self.base.tolist(),
            "frame": self.frame.columns.tolist(),
            "elements": [h.to_json() for h in self.elements],
            "loops": [lp.to_json() for lp in self.loops],
            "note": SAMPLING_NOTE,
        }


def protocol_loops(chart: MetricChart, x, frame: np.ndarray, protocol: Protocol) -> list[LoopSpec]:
    x = np.asarray(x, dtype=float)
    m = chart.dim
    loops = []
    planes = list(itertools.combinations(range(m), 2))
    if protocol.n_planes is not None:
        planes = planes[: protocol.n_planes]
    signs = [(1, 1), (-1, 1), (-1, -1), (1, -1)] if protocol.quadrants else [(1, 1)]
    for i, j in planes:
        for eps in protocol.eps_list:
            for si, sj in signs:
                loops.append(LoopSpec.rect(x, i, j, si * eps, sj * eps))
    if protocol.circuits:
        loops.extend(LoopSpec.circuit(x, k) for k in chart.periodic_axes())
    rng = np.random.default_rng(protocol.seed)
    for _ in range(protocol.n_random_polygons):
        dirs = rng.standard_normal((protocol.polygon_vertices, m))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        loops.append(LoopSpec.polygon(x, dirs, protocol.polygon_side))
    return loops


def sample_holonomy(chart: MetricChart, x, protocol: Protocol = Protocol(), frame: FramePoint | None = None,
                    tol: Tolerances = DEFAULT) -> HolonomySample:
    """Develop every protocol loop; deterministic for a fixed seed, results in loop order."""
    x = chart.require(x)
    frame = orthonormal_frame(chart, x) if frame is None else frame
    loops = protocol_loops(chart, x, frame.columns, protocol)
    step = tol.step if protocol.step is None else protocol.step

    def run(lp):
        return develop_loop(chart, lp, frame, step, tol)

    if protocol.workers > 1:
        with ThreadPoolExecutor(max_workers=protocol.workers) as pool:
            elements = list(pool.map(run, loops))
    else:
        elements = [run(lp) for lp in loops]
    return HolonomySample(base=x, elements=elements, loops=loops, frame=frame)


@dataclass(frozen=True)
class SplittingResult:
    """Orthogonal decomposition; ``subspaces[0]`` is the flat factor (possibly 0-dimensional)."""

    subspaces: list
    coupling: float = 0.0

    @property
    def flat(self) -> np.ndarray:
        return self.subspaces[0]

    @property
    def factors(self) -> list[np.ndarray]:
        return [b for b in self.subspaces[1:]]

    @property
    def dims(self) -> list[int]:
        return [b.shape[1] for b in self.subspaces]

    @property
    def projectors(self) -> list[np.ndarray]:
        return [b @ b.T for b in self.subspaces]

    def invariance_defect(self, linear_parts: Sequence[np.ndarray]) -> float:
        worst = 0.0
        for B in self.subspaces:
            if B.shape[1] == 0:
                continue
            P = B @ B.T
            for A in linear_parts:
                worst = max(worst, float(np.linalg.norm(A @ B - P @ A @ B, 2)))
        return worst


def _canonical_basis(B: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(B): Gram-Schmidt on projected unit vectors."""
    m, k = B.shape
    if k == 0:
        return np.zeros((m, 0))
    P = B @ B.T
    cols = []
    for e in range(m):
        v = P[:, e].copy()
        for c in cols:
            v -= (c @ v) * c
        nv = np.linalg.norm(v)
        if nv > 1e-6:
            cols.append(v / nv)
        if len(cols) == k:
            break
    return np.stack(cols, axis=1)


def _sort_key(B: np.ndarray):
    return (B.shape[1], tuple(np.round(-np.abs(B.T).ravel(), 9)))


def derham_split(sample: HolonomySample | Sequence[AffineIsometry], tol: Tolerances = DEFAULT) -> SplittingResult:
    """Flat factor plus minimal invariant subspaces of the sampled linear holonomy.

    The flat factor is the common fixed space of all linear parts. Its complement is cut
    along the eigenspaces of sum (A_i - I)^T (A_i - I); eigenspaces that some A_i couples
    are merged until every block is invariant.
    """
    elements = sample.elements if isinstance(sample, HolonomySample) else list(sample)
    if not elements:
        raise EmptySample("cannot split an empty sample")
    As = [h.linear for h in elements]
    m = As[0].shape[0]
    eye = np.eye(m)
    stacked = np.concatenate([A - eye for A in As], axis=0)
    _, sv, vt = np.linalg.svd(stacked)
    sv = np.concatenate([sv, np.zeros(m - sv.size)])
    flat_mask = sv <= tol.tol_split
    flat = _canonical_basis(vt[flat_mask].T)
    rest = vt[~flat_mask].T
    if rest.shape[1] == 0:
        return SplittingResult([flat])

    S = sum((A - eye).T @ (A - eye) for A in As)
    evals, evecs = np.linalg.eigh(rest.T @ S @ rest)
    pieces, start = [], 0
    scale = max(1.0, float(np.max(np.abs(evals))))
    for k in range(1, evals.size + 1):
        if k == evals.size or evals[k] - evals[k - 1] > tol.cluster_gap * scale:
            pieces.append(rest @ evecs[:, start:k])
            start = k

    parent = list(range(len(pieces)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    worst = 0.0
    for p, q in itertools.permutations(range(len(pieces)), 2):
        c = max(float(np.linalg.norm(pieces[q].T @ A @ pieces[p], 2)) for A in As)
        if 0.1 * tol.tol_split < c <= 10 * tol.tol_split:
            raise ToleranceAmbiguity(
                f"coupling {c:.2e} between candidate blocks is within a decade of tol_split")
        if c > tol.tol_split:
            parent[find(p)] = find(q)
        else:
            worst = max(worst, c)
    groups: dict[int, list] = {}
    for k, piece in enumerate(pieces):
        groups.setdefault(find(k), []).append(piece)
    blocks = [_canonical_basis(np.concatenate(g, axis=1)) for g in groups.values()]
    blocks.sort(key=_sort_key)
    return SplittingResult([flat] + blocks, coupling=worst)


@dataclass(frozen=True)
class ProductBlockReport:
    passed: bool
    max_off_block: float
    max_flat_defect: float
    offending: list

    def to_json(self) -> dict:
        return {"passed": self.passed, "max_off_block": self.max_off_block,
                "max_flat_defect": self.max_flat_defect, "offending": self.offending}


def verify_product_blocks(sample: HolonomySample | Sequence[AffineIsometry], splitting: SplittingResult,
                          tol: Tolerances = DEFAULT) -> ProductBlockReport:
    """Check that every element acts factor by factor and trivially on the flat factor."""
    elements = sample.elements if isinstance(sample, HolonomySample) else list(sample)
    blocks = [b for b in splitting.subspaces if b.shape[1] > 0]
    flat = splitting.flat
    worst_off, worst_flat, offending = 0.0, 0.0, []
    for idx, h in enumerate(elements):
        off = 0.0
        for p, q in itertools.permutations(range(len(blocks)), 2):
            off = max(off, float(np.linalg.norm(blocks[q].T @ h.linear @ blocks[p], 2)))
        flat_def = 0.0
        if flat.shape[1]:
            flat_def = max(h.restrict(flat).distance_to_identity(), 0.0)
        worst_off = max(worst_off, off)
        worst_flat = max(worst_flat, flat_def)
        if off > tol.tol_split or flat_def > tol.tol_trivial:
            offending.append(idx)
    return ProductBlockReport(not offending, worst_off, worst_flat, offending)


class FactorVerdict(str, enum.Enum):
    TRIVIAL = "TRIVIAL"
    COMPACT_FIXED_POINT = "COMPACT_FIXED_POINT"
    FULL_SEMIDIRECT = "FULL_SEMIDIRECT"


@dataclass
class FactorReport:
    basis: np.ndarray
    flat: bool
    verdict: FactorVerdict
    fixed_point: Optional[np.ndarray]
    fixed_point_residual: float
    fixed_point_verdict: str
    translation_rank: int
    translation_singular_values: np.ndarray
    inconsistent: bool

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def to_json(self) -> dict:
        return {
            "dims": self.dim,
            "flat": self.flat,
            "basis": self.basis.tolist(),
            "verdict": self.verdict.value,
            "fixed_point": None if self.fixed_point is None else self.fixed_point.tolist(),
            "translation_rank": self.translation_rank,
            "inconsistent": self.inconsistent,
            "residuals": {
                "fixed_point": self.fixed_point_residual,
                "fixed_point_verdict": self.fixed_point_verdict,
                "translation_singular_values": self.translation_singular_values.tolist(),
            },
        }


@dataclass
class ClassificationReport:
    manifold: str
    base: np.ndarray
    verdict: Compactness
    factors: list
    fixed_point: Optional[np.ndarray]
    inconsistent: bool
    product_blocks: ProductBlockReport
    protocol: Protocol
    tolerances: Tolerances
    n_elements: int
    frame: np.ndarray
    sample: HolonomySample = field(repr=False)

    @property
    def nonflat(self) -> list[FactorReport]:
        return [f for f in self.factors if not f.flat]

    @property
    def summary(self) -> str:
        """The factor verdict when there is a single factor, otherwise the overall verdict."""
        if len(self.factors) == 1:
            return self.factors[0].verdict.value
        return self.verdict.value

    def to_json(self) -> dict:
        return {
            "manifold": self.manifold,
            "base": self.base.tolist(),
            "verdict": self.verdict.value,
            "summary": self.summary,
            "inconsistent": self.inconsistent,
            "fixed_point": None if self.fixed_point is None else self.fixed_point.tolist(),
            "factors": [f.to_json() for f in self.factors],
            "product_blocks": self.product_blocks.to_json(),
            "n_elements": self.n_elements,
            "frame": self.frame.tolist(),
            "protocol": self.protocol.as_dict(),
            "tolerances": self.tolerances.as_dict(),
            "note": SAMPLING_NOTE,
        }


def _loop_scale(protocol: Protocol) -> float:
    sizes = list(protocol.eps_list) + ([protocol.polygon_side] if protocol.n_random_polygons else [])
    return min(sizes) if sizes else 1.0


def translation_rank(translations: np.ndarray, floor: float, tol: Tolerances = DEFAULT):
    """Numerical rank of the stacked translation parts and their singular values."""
    if translations.size == 0 or translations.shape[1] == 0:
        return 0, np.zeros(0)
    sv = np.linalg.svd(translations, compute_uv=False)
    threshold = tol.tol_rank * max(float(sv[0]), floor)
    return int(np.sum(sv > threshold)), sv


def classify_sample(sample: HolonomySample, protocol: Protocol = Protocol(), tol: Tolerances = DEFAULT,
                    manifold: str = "") -> ClassificationReport:
    check_orthogonal(sample.elements, tol)
    split = derham_split(sample, tol)
    blocks = verify_product_blocks(sample, split, tol)
    m = sample.elements[0].dim
    floor = _loop_scale(protocol)
    factors = []
    for k, B in enumerate(split.subspaces):
        if B.shape[1] == 0:
            continue
        restricted = [h.restrict(B) for h in sample.elements]
        compact = compactness_verdict(restricted, tol)
        fp = solve_fixed_point(restricted, tol)
        rank, sv = translation_rank(np.stack([h.translation for h in restricted]), floor, tol)
        inconsistent = False
        if compact is Compactness.TRIVIAL:
            verdict, point = FactorVerdict.TRIVIAL, None
        elif compact is Compactness.COMPACT:
            verdict, point = FactorVerdict.COMPACT_FIXED_POINT, fp.point
        else:
            verdict, point = FactorVerdict.FULL_SEMIDIRECT, None
            # An irreducible factor without fixed point must have translations of full rank.
            inconsistent = rank != B.shape[1]
        factors.append(FactorReport(B, k == 0, verdict, point, fp.residual, fp.verdict.value,
                                    rank, sv, inconsistent))
    verdicts = {f.verdict for f in factors}
    if verdicts <= {FactorVerdict.TRIVIAL}:
        overall = Compactness.TRIVIAL
    elif FactorVerdict.FULL_SEMIDIRECT in verdicts:
        overall = Compactness.NONCOMPACT
    else:
        overall = Compactness.COMPACT
    fixed = None
    if overall is not Compactness.NONCOMPACT:
        fixed = np.zeros(m)
        for f in factors:
            if f.fixed_point is not None:
                fixed = fixed + f.basis @ f.fixed_point
    return ClassificationReport(
        manifold=manifold, base=sample.base, verdict=overall, factors=factors, fixed_point=fixed,
        inconsistent=any(f.inconsistent for f in factors), product_blocks=blocks, protocol=protocol,
        tolerances=tol, n_elements=len(sample.elements), frame=sample.frame.columns, sample=sample,
    )


def classify(chart: MetricChart, x, protocol: Protocol = Protocol(), tol: Tolerances = DEFAULT,
             frame: FramePoint | None = None, manifold: str | None = None) -> ClassificationReport:
    """sample -> split -> per-factor fixed point and translation rank -> verdicts."""
    sample = sample_holonomy(chart, x, protocol, frame, tol)
    return classify_sample(sample, protocol, tol, manifold or chart.label)
