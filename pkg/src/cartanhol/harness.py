"""Run configuration, the noncompactness evidence report and the verification suite."""

from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional

import jsonschema
import numpy as np

from . import __version__
from .affine import (
    AffineFrame,
    AffineIsometry,
    Compactness,
    compose,
    extended_gl_action,
    extended_to_frame,
    extended_to_product,
    frame_projection,
    frame_right_action,
    frame_to_product,
    include_frame,
    product_right_action,
    product_to_frame,
)
from .catalog import CATALOG, chart_from_descriptor
from .cones import ConeVerdict, certify_cone, homothety_check
from .errors import ConfigInvalid, HolonomyError, NoFixedPoint
from .geometry import MetricChart, geodesic, orthonormal_frame, ricci_direction, riemann_tensor
from .holonomy import (
    ClassificationReport,
    FactorVerdict,
    Protocol,
    classify,
    derham_split,
)
from .tolerances import DEFAULT, Tolerances
from .transport import LoopSpec, develop_loop, loglog_slope, small_loop_family

# ---------------------------------------------------------------- configuration


def load_schema() -> dict:
    text = resources.files("cartanhol").joinpath("config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass
class RunConfig:
    manifold: str
    descriptor: dict
    chart: MetricChart
    base: np.ndarray
    protocol: Protocol
    tolerances: Tolerances
    seed: Optional[int]
    curve: Optional[LoopSpec] = None
    p_star: Optional[np.ndarray] = None
    cone_policy: str = "auto"
    noncompactness_k: int = 5
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, seed: int | None = None, step: float | None = None,
                  tol_file: str | None = None) -> "RunConfig":
        """Validate against the shipped schema, then apply command-line overrides."""
        try:
            jsonschema.validate(data, load_schema())
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigInvalid(f"config invalid at {path}: {exc.message}") from None

        entry = data["manifold"]
        if isinstance(entry, str):
            if entry not in CATALOG:
                raise ConfigInvalid(f"unknown catalog manifold {entry!r}")
            name, (descriptor, default_base, _) = entry, CATALOG[entry]
        else:
            name, descriptor, default_base = entry.get("label", entry["kind"]), entry, None
        chart = chart_from_descriptor(descriptor)
        base = data.get("base", default_base)
        if base is None:
            raise ConfigInvalid("a base point is required for non-catalog manifolds")
        base = np.asarray(base, dtype=float)
        if base.shape != (chart.dim,):
            raise ConfigInvalid(f"base point has {base.size} coordinates, chart dimension is {chart.dim}")
        if not chart.contains(base):
            raise ConfigInvalid(f"base point {base.tolist()} lies outside the chart domain")

        protocol = Protocol.from_dict(data.get("protocol", {}))
        seed = data.get("seed") if seed is None else seed
        if protocol.n_random_polygons > 0 and seed is None:
            raise ConfigInvalid("a seed is required when the protocol draws random polygons")
        if seed is not None:
            protocol = protocol.replace(seed=int(seed))
        if step is not None:
            protocol = protocol.replace(step=float(step))

        tol = DEFAULT
        if tol_file is not None:
            try:
                tol = Tolerances.from_file(tol_file)
            except (OSError, KeyError, ValueError, TypeError) as exc:
                raise ConfigInvalid(f"cannot read tolerance file: {exc}") from None
        try:
            tol = tol.replace(**data.get("tolerances", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid(str(exc)) from None
        if protocol.step is not None:
            tol = tol.replace(step=protocol.step)

        curve = LoopSpec.from_json(data["curve"]) if "curve" in data else None
        if curve is not None and curve.base.shape != (chart.dim,):
            raise ConfigInvalid("curve base point does not match the chart dimension")
        p_star = np.asarray(data["p_star"], dtype=float) if "p_star" in data else None
        if p_star is not None and p_star.shape != (chart.dim,):
            raise ConfigInvalid("p_star does not match the chart dimension")
        return cls(name, descriptor, chart, base, protocol, tol, seed, curve, p_star,
                   data.get("cone_policy", "auto"), int(data.get("noncompactness_k", 5)),
                   dict(data.get("outputs", {})))

    @classmethod
    def from_file(cls, path: str, **overrides) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data, **overrides)

    @classmethod
    def for_catalog(cls, name: str, seed: int = 0, **overrides) -> "RunConfig":
        return cls.from_dict({"manifold": name, "seed": seed}, **overrides)

    def default_curve(self) -> LoopSpec:
        """One turn around the first periodic axis, else a small coordinate square."""
        axes = self.chart.periodic_axes()
        if axes:
            return LoopSpec.circuit(self.base, axes[0])
        return LoopSpec.rect(self.base, 0, 1 if self.chart.dim > 1 else 0, 0.2)

    def provenance(self) -> dict:
        return {"manifold": self.manifold, "descriptor": self.descriptor, "base": self.base.tolist(),
                "seed": self.seed, "protocol": self.protocol.as_dict(), "tolerances": self.tolerances.as_dict()}


# ---------------------------------------------------------------- noncompactness evidence


class EvidenceVerdict(str, enum.Enum):
    EVIDENCE_NONCOMPACT = "EVIDENCE_NONCOMPACT"
    BOUNDED = "BOUNDED"
    NOT_APPLICABLE = "NOT_APPLICABLE"


EVIDENCE_NOTE = ("A chart is never complete. This report witnesses growth of the translation parts of "
                 "iterated loops over the sampled k only; it is not a proof of noncompactness.")


@dataclass(frozen=True)
class NoncompactnessReport:
    loop: LoopSpec
    k_values: list
    norms: list
    linear_defects: list
    verdict: EvidenceVerdict

    def to_json(self) -> dict:
        return {"loop": self.loop.to_json(), "k": self.k_values, "translation_norms": self.norms,
                "linear_defects": self.linear_defects, "verdict": self.verdict.value, "note": EVIDENCE_NOTE}


def global_noncompactness_evidence(chart: MetricChart, x, k_max: int = 5, loop: LoopSpec | None = None,
                                   step: float | None = None, tol: Tolerances = DEFAULT) -> NoncompactnessReport:
    """Develop the k-fold concatenation of one loop for k = 1..k_max and track ||b_k||.

    EVIDENCE_NONCOMPACT needs strictly increasing norms whose increments stay above half
    the first norm (linear growth). Norms and linear parts that all vanish give
    NOT_APPLICABLE, the flat case. Anything else is BOUNDED.
    """
    x = chart.require(x)
    if loop is None:
        axes = chart.periodic_axes()
        loop = LoopSpec.circuit(x, axes[0]) if axes else LoopSpec.rect(x, 0, min(1, chart.dim - 1), 0.2)
    ks = list(range(1, int(k_max) + 1))
    norms, defects = [], []
    for k in ks:
        h = develop_loop(chart, LoopSpec.concat([loop], repeat=k), step=step, tol=tol)
        norms.append(float(np.linalg.norm(h.translation)))
        defects.append(float(np.max(np.abs(h.linear - np.eye(h.dim)))))
    arr = np.array(norms)
    if np.all(arr <= tol.tol_trivial * np.array(ks)) and max(defects) <= tol.tol_trivial:
        verdict = EvidenceVerdict.NOT_APPLICABLE
    elif len(ks) > 1 and np.all(np.diff(arr) > 0.5 * arr[0]) and arr[0] > tol.tol_trivial:
        verdict = EvidenceVerdict.EVIDENCE_NONCOMPACT
    else:
        verdict = EvidenceVerdict.BOUNDED
    return NoncompactnessReport(loop, ks, norms, defects, verdict)


# ---------------------------------------------------------------- verification suite


class Status(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    SKIP = "SKIP"


@dataclass
class CheckResult:
    name: str
    status: Status
    residuals: dict = field(default_factory=dict)
    details: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"name": self.name, "status": self.status.value, "residuals": self.residuals,
                "details": self.details}


# Expected outcomes on the shipped catalog.  summary: ClassificationReport.summary;
# nonflat_dims: dimensions of the non-flat factors; apex: fixed point in frame coordinates;
# cone: True for cones, False for negative controls; evidence: noncompactness verdict.
EXPECTED = {
    "flat-r2": dict(summary="TRIVIAL", flat_dim=2, nonflat_dims=[], evidence="NOT_APPLICABLE"),
    "flat-r3": dict(summary="TRIVIAL", flat_dim=3, nonflat_dims=[], evidence="NOT_APPLICABLE"),
    "sphere-s2": dict(summary="FULL_SEMIDIRECT", flat_dim=0, nonflat_dims=[2], cone=False,
                      evidence="EVIDENCE_NONCOMPACT", loop_length=2 * math.pi),
    "sphere-s2-scaled": dict(summary="FULL_SEMIDIRECT", flat_dim=0, nonflat_dims=[2],
                             evidence="EVIDENCE_NONCOMPACT", loop_length=4 * math.pi),
    "hyperbolic-h2": dict(summary="FULL_SEMIDIRECT", flat_dim=0, nonflat_dims=[2], cone=False),
    "cone-circle": dict(summary="COMPACT_FIXED_POINT", flat_dim=0, nonflat_dims=[2], apex=[-1.0, 0.0],
                        cone=True, evidence="BOUNDED", bound=2.0),
    "cone-sphere": dict(summary="COMPACT_FIXED_POINT", flat_dim=0, nonflat_dims=[3], apex=[-1.0, 0.0, 0.0],
                        cone=True, evidence="BOUNDED", bound=2.0),
    "cone-product": dict(summary="COMPACT", flat_dim=0, nonflat_dims=[2, 2], apex=[-1.0, 0.0, -1.0, 0.0],
                         cone=True),
    "flat-sphere": dict(summary="NONCOMPACT", flat_dim=1, nonflat_dims=[2], evidence="EVIDENCE_NONCOMPACT",
                        loop_length=2 * math.pi),
    "paraboloid": dict(summary="FULL_SEMIDIRECT", flat_dim=0, nonflat_dims=[2], cone=False),
}


@dataclass
class SuiteContext:
    configs: dict
    tol: Tolerances = DEFAULT
    seed: int = 0
    _cache: dict = field(default_factory=dict)

    def memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def classification(self, name: str) -> ClassificationReport:
        cfg = self.configs[name]
        return self.memo(("classify", name), lambda: classify(cfg.chart, cfg.base, cfg.protocol,
                                                              cfg.tolerances, manifold=name))

    def certificate(self, name: str):
        """Cone certificate with p* from the classification, or the raised error."""
        cfg = self.configs[name]

        def run():
            try:
                return certify_cone(cfg.chart, cfg.base, cfg.p_star, cfg.protocol, cfg.tolerances)
            except HolonomyError as exc:
                return exc

        return self.memo(("cone", name), run)

    def expected(self, name: str) -> dict:
        """Catalog expectations, only when descriptor and base point match the shipped entry."""
        cfg = self.configs[name]
        if name not in CATALOG:
            return {}
        desc, base, _ = CATALOG[name]
        if cfg.descriptor != desc or not np.allclose(cfg.base, base, rtol=0, atol=1e-12):
            return {}
        return EXPECTED.get(name, {})


@dataclass(frozen=True)
class Check:
    name: str
    claim: str
    run: Callable[[SuiteContext], CheckResult]


def _finish(name: str, cases: list[tuple[str, bool, dict]]) -> CheckResult:
    """Fold per-case (label, passed, residuals) triples into one result."""
    if not cases:
        return CheckResult(name, Status.SKIP, {}, ["no applicable manifold"])
    residuals = {label: res for label, _, res in cases}
    details = [f"{label}: {'ok' if ok else 'FAILED'}" for label, ok, _ in cases]
    status = Status.PASS if all(ok for _, ok, _ in cases) else Status.FAIL
    return CheckResult(name, status, residuals, details)


def _guarded(label: str, fn) -> tuple[str, bool, dict]:
    try:
        return fn()
    except HolonomyError as exc:
        return label, False, {"error": type(exc).__name__, "message": str(exc)}


def check_rolling_sphere(ctx: SuiteContext) -> CheckResult:
    from .catalog import sphere

    def case():
        chart = sphere(1.0)
        x = np.array([math.pi / 2, 0.0])
        h = develop_loop(chart, LoopSpec.circuit(x, 1), step=1e-4, tol=ctx.tol)
        lin = float(np.max(np.abs(h.linear - np.eye(2))))
        norm = float(np.linalg.norm(h.translation))
        e = orthonormal_frame(chart, x).columns
        direction = np.linalg.solve(e, np.array([0.0, 1.0]))
        cosang = abs(h.translation @ direction) / (norm * np.linalg.norm(direction))
        angle = float(math.acos(min(1.0, cosang)))
        ok = lin < 1e-6 and abs(norm - 2 * math.pi) < 1e-3 and angle < 1e-3
        return "sphere-equator", ok, {"linear_defect": lin, "translation_norm": norm, "angle": angle}

    return _finish("rolling-sphere", [_guarded("sphere-equator", case)])


def check_bundle_maps(ctx: SuiteContext) -> CheckResult:
    rng = np.random.default_rng(ctx.seed)
    worst = {"frame_action_law": 0.0, "product_action_law": 0.0, "equivariance": 0.0,
             "roundtrip": 0.0, "extended_composite": 0.0, "extended_invariance": 0.0, "conjugation": 0.0}

    def rand_iso(m):
        q, _ = np.linalg.qr(rng.normal(size=(m, m)))
        return AffineIsometry(q, rng.normal(size=m))

    for trial in range(100):
        m = 2 + trial % 3
        u = rng.normal(size=(m, m)) + 3 * np.eye(m)
        af = AffineFrame(rng.normal(size=m), u)
        g1, g2 = rand_iso(m), rand_iso(m)
        a = frame_right_action(frame_right_action(af, g1), g2)
        b = frame_right_action(af, compose(g1, g2))
        worst["frame_action_law"] = max(worst["frame_action_law"], np.max(np.abs(a.point - b.point)),
                                        np.max(np.abs(a.frame - b.frame)))
        uv = frame_to_product(af)
        p1 = product_right_action(*product_right_action(*uv, g1), g2)
        p2 = product_right_action(*uv, compose(g1, g2))
        worst["product_action_law"] = max(worst["product_action_law"], np.max(np.abs(p1[0] - p2[0])),
                                          np.max(np.abs(p1[1] - p2[1])))
        lhs = frame_to_product(frame_right_action(af, g1))
        rhs = product_right_action(*uv, g1)
        worst["equivariance"] = max(worst["equivariance"], np.max(np.abs(lhs[0] - rhs[0])),
                                    np.max(np.abs(lhs[1] - rhs[1])))
        back = product_to_frame(*uv)
        worst["roundtrip"] = max(worst["roundtrip"], np.max(np.abs(back.point - af.point)),
                                 np.max(np.abs(back.frame - af.frame)))
        f = extended_to_frame(*include_frame(frame_projection(af)))
        worst["extended_composite"] = max(worst["extended_composite"], np.max(np.abs(f.frame - af.frame)),
                                          np.max(np.abs(f.point)))
        s = rng.normal(size=(m, m)) + 3 * np.eye(m)
        e1 = extended_to_product(u, g1)
        e2 = extended_to_product(*extended_gl_action(u, g1, s))
        worst["extended_invariance"] = max(worst["extended_invariance"], np.max(np.abs(e1[0] - e2[0])),
                                           np.max(np.abs(e1[1] - e2[1])))
        tau = AffineIsometry.translation_by(rng.normal(size=m))
        conj = compose(g1, compose(tau, g1.inverse()))
        worst["conjugation"] = max(worst["conjugation"], np.max(np.abs(conj.linear - np.eye(m))),
                                   np.max(np.abs(conj.translation - g1.linear @ tau.translation)))
    worst = {k: float(v) for k, v in worst.items()}
    return _finish("bundle-maps", [("random-100", max(worst.values()) < 1e-12, worst)])


def check_affine_product_action(ctx: SuiteContext) -> CheckResult:
    """Sampled holonomy is orthogonal-by-translation and respects loop concatenation."""
    cases = []
    for name, cfg in ctx.configs.items():
        def case(name=name, cfg=cfg):
            rep = ctx.classification(name)
            orth = max(h.orthogonality_defect() for h in rep.sample.elements)
            loops = rep.sample.loops[:2]
            h1, h2 = rep.sample.elements[:2]
            both = develop_loop(cfg.chart, LoopSpec.concat(loops), step=cfg.protocol.step, tol=cfg.tolerances)
            law = compose(h2, h1)
            hom = float(max(np.max(np.abs(both.linear - law.linear)),
                            np.max(np.abs(both.translation - law.translation))))
            ok = orth <= cfg.tolerances.tol_orth and hom < 1e-6
            return name, ok, {"orthogonality": orth, "concatenation": hom}
        cases.append(_guarded(name, case))
    return _finish("affine-product-action", cases)


def check_flat_triviality(ctx: SuiteContext) -> CheckResult:
    cases = []
    for name, cfg in ctx.configs.items():
        if cfg.descriptor.get("kind") != "flat":
            continue

        def case(name=name, cfg=cfg):
            rep = ctx.classification(name)
            rng = np.random.default_rng(ctx.seed)
            worst = max(h.distance_to_identity() for h in rep.sample.elements)
            m = cfg.chart.dim
            for _ in range(200):
                kind = rng.integers(3)
                if kind == 0:
                    i, j = rng.choice(m, 2, replace=False)
                    lp = LoopSpec.rect(cfg.base, int(i), int(j), float(rng.uniform(0.05, 1.0)),
                                       float(rng.uniform(-1.0, 1.0)))
                elif kind == 1:
                    lp = LoopSpec.polygon(cfg.base, rng.normal(size=(2, m)), float(rng.uniform(0.1, 1.0)))
                else:
                    pts = cfg.base + rng.uniform(-0.5, 0.5, size=(6, m))
                    pts[0] = pts[-1] = cfg.base
                    lp = LoopSpec.from_points(pts)
                h = develop_loop(cfg.chart, lp, step=0.01, tol=cfg.tolerances)
                worst = max(worst, h.distance_to_identity())
            ok = rep.verdict is Compactness.TRIVIAL and worst < 1e-8
            return name, ok, {"max_distance_to_identity": float(worst), "verdict": rep.verdict.value}
        cases.append(_guarded(name, case))
    return _finish("flat-triviality", cases)


def check_derham_splitting(ctx: SuiteContext) -> CheckResult:
    cases = []
    for name in ctx.configs:
        def case(name=name):
            rep = ctx.classification(name)
            split = derham_split(rep.sample, ctx.configs[name].tolerances)
            inv = split.invariance_defect(rep.sample.linear_parts)
            total = sum(B.shape[1] for B in split.subspaces)
            basis = np.concatenate(split.subspaces, axis=1)
            ortho = float(np.max(np.abs(basis.T @ basis - np.eye(total))))
            exp = ctx.expected(name)
            dims_ok = True
            if exp:
                dims_ok = (split.flat.shape[1] == exp["flat_dim"]
                           and sorted(split.dims[1:]) == sorted(exp["nonflat_dims"]))
            tol_split = ctx.configs[name].tolerances.tol_split
            ok = inv <= tol_split and ortho <= tol_split and total == rep.sample.elements[0].dim and dims_ok
            return name, ok, {"invariance": inv, "orthogonality": ortho, "dims": split.dims}
        cases.append(_guarded(name, case))
    return _finish("derham-splitting", cases)


def check_flat_factor(ctx: SuiteContext) -> CheckResult:
    cases = []
    for name in ctx.configs:
        def case(name=name):
            rep = ctx.classification(name)
            flat = [f for f in rep.factors if f.flat]
            if not flat or len(rep.factors) < 2:
                return None
            defect = rep.product_blocks.max_flat_defect
            ok = defect < 1e-8 and flat[0].verdict is FactorVerdict.TRIVIAL
            return name, ok, {"flat_dim": flat[0].dim, "flat_defect": defect}
        res = _guarded(name, case)
        if res is not None:
            cases.append(res)
    return _finish("flat-factor", cases)


def check_product_blocks(ctx: SuiteContext) -> CheckResult:
    cases = []
    for name in ctx.configs:
        def case(name=name):
            rep = ctx.classification(name)
            pb = rep.product_blocks
            return name, pb.passed, {"max_off_block": pb.max_off_block, "max_flat_defect": pb.max_flat_defect,
                                     "offending": pb.offending}
        cases.append(_guarded(name, case))
    return _finish("product-blocks", cases)


def check_cartan_dichotomy(ctx: SuiteContext) -> CheckResult:
    cases = []
    for name in ctx.configs:
        def case(name=name):
            rep = ctx.classification(name)
            ranks = [(f.dim, f.translation_rank, f.verdict.value) for f in rep.factors if not f.flat]
            ok = not rep.inconsistent
            return name, ok, {"factors": [{"dim": d, "rank": r, "verdict": v} for d, r, v in ranks]}
        cases.append(_guarded(name, case))
    return _finish("cartan-dichotomy", cases)


def check_compact_iff_cones(ctx: SuiteContext) -> CheckResult:
    cases = []
    for name in ctx.configs:
        exp = ctx.expected(name)
        if "summary" not in exp or exp["summary"] == "TRIVIAL":
            continue

        def case(name=name, exp=exp):
            rep = ctx.classification(name)
            res = {"summary": rep.summary, "verdict": rep.verdict.value}
            ok = rep.summary == exp["summary"]
            if "apex" in exp:
                err = float(np.max(np.abs(rep.fixed_point - np.array(exp["apex"]))))
                fp_res = max(f.fixed_point_residual for f in rep.factors)
                res.update(apex_error=err, fixed_point_residual=fp_res)
                ok = ok and err < 1e-3 and rep.verdict is Compactness.COMPACT and rep.product_blocks.passed
            else:
                ok = ok and rep.verdict is Compactness.NONCOMPACT
            return name, ok, res
        cases.append(_guarded(name, case))
    return _finish("compact-iff-cones", cases)


def check_einstein_semidirect(ctx: SuiteContext) -> CheckResult:
    cases = []
    for name in ctx.configs:
        if ctx.expected(name).get("summary") != "FULL_SEMIDIRECT":
            continue

        def case(name=name):
            rep = ctx.classification(name)
            (f,) = rep.factors
            fp_scale = solve_scale(rep)
            sigma_min = float(f.translation_singular_values[-1])
            ok = (f.verdict is FactorVerdict.FULL_SEMIDIRECT and f.translation_rank == f.dim
                  and f.fixed_point_residual > rep.tolerances.tol_fp * fp_scale)
            if name == "sphere-s2":
                ok = ok and sigma_min > 1e-3 and f.fixed_point_residual > 1e-2 * fp_scale
            return name, ok, {"rank": f.translation_rank, "sigma_min": sigma_min,
                              "fixed_point_residual": f.fixed_point_residual, "scale": fp_scale}
        cases.append(_guarded(name, case))
    return _finish("einstein-semidirect", cases)


def solve_scale(rep: ClassificationReport) -> float:
    return max(1.0, max(float(np.linalg.norm(h.translation)) for h in rep.sample.elements))


def _cone_cases(ctx: SuiteContext, key: str, limit: float):
    cases = []
    for name in ctx.configs:
        exp = ctx.expected(name)
        if "cone" in exp:
            want_cone = exp["cone"]
        else:
            rep = ctx.classification(name)
            if ctx.configs[name].cone_policy == "off" or rep.verdict is not Compactness.COMPACT:
                continue
            want_cone = True

        def case(name=name, want_cone=want_cone):
            cert = ctx.certificate(name)
            if isinstance(cert, NoFixedPoint):
                return name, not want_cone, {"error": "NoFixedPoint"}
            if isinstance(cert, Exception):
                raise cert
            value = cert.residuals[key]
            ok = (value < limit and cert.verdict is ConeVerdict.CONE) if want_cone else value > 1e-2
            return name, ok, {key: value, "verdict": cert.verdict.value}
        cases.append(_guarded(name, case))
    return cases


def check_radial_field(ctx: SuiteContext) -> CheckResult:
    cases = _cone_cases(ctx, "nabla", ctx.tol.tol_cone)
    grad = _cone_cases(ctx, "grad", ctx.tol.tol_cone)
    merged = []
    for (n1, ok1, r1), (_, ok2, r2) in zip(cases, grad):
        merged.append((n1, ok1 and ok2, {**r1, **r2}))
    return _finish("radial-field", merged)


def check_homothety(ctx: SuiteContext) -> CheckResult:
    cases = _cone_cases(ctx, "homothety", ctx.tol.tol_cone)
    # Negative control with a field that is not conformal.
    from .catalog import sphere

    def neg():
        chart = sphere(1.0)
        x = np.array([math.pi / 2, 0.3])
        value = homothety_check(chart, x, lambda q: np.stack([np.sin(q[..., 1]), -q[..., 0] + 2.0], axis=-1),
                                (0.1,))
        return "sphere-synthetic-field", value > 1e-2, {"homothety": value}

    cases.append(_guarded("sphere-synthetic-field", neg))
    return _finish("homothety", cases)


def check_curvature_nullity(ctx: SuiteContext) -> CheckResult:
    cases = _cone_cases(ctx, "curvature", ctx.tol.tol_curv)
    for name, cfg in ctx.configs.items():
        if cfg.descriptor.get("kind") != "cone":
            continue

        def case(name=name, cfg=cfg):
            ric = float(abs(ricci_direction(cfg.chart, cfg.base, np.eye(cfg.chart.dim)[0], cfg.tolerances)))
            ok = ric < cfg.tolerances.tol_curv
            res = {"ricci_radial": ric}
            if cfg.chart.dim == 2:
                riem = float(np.max(np.abs(riemann_tensor(cfg.chart, cfg.base, cfg.tolerances))))
                res["riemann_max"] = riem
                ok = ok and riem < cfg.tolerances.tol_curv
            return name + ":ricci", ok, res
        cases.append(_guarded(name + ":ricci", case))
    return _finish("curvature-nullity", cases)


def check_global_noncompactness(ctx: SuiteContext) -> CheckResult:
    cases = []
    for name, cfg in ctx.configs.items():
        exp = ctx.expected(name)
        if "evidence" not in exp:
            continue

        def case(name=name, cfg=cfg, exp=exp):
            rep = ctx.memo(("evidence", name), lambda: global_noncompactness_evidence(
                cfg.chart, cfg.base, cfg.noncompactness_k, tol=cfg.tolerances))
            ok = rep.verdict.value == exp["evidence"]
            res = {"norms": rep.norms, "verdict": rep.verdict.value}
            if "loop_length" in exp:
                err = max(abs(n - k * exp["loop_length"]) for k, n in zip(rep.k_values, rep.norms))
                res["additivity_error"] = float(err)
                ok = ok and err < 1e-3
            if "bound" in exp:
                ok = ok and max(rep.norms) <= exp["bound"] + 1e-6
            return name, ok, res
        cases.append(_guarded(name, case))
    return _finish("global-noncompactness", cases)


def _max_curvature_plane(chart: MetricChart, x, tol: Tolerances):
    riem = riemann_tensor(chart, x, tol)
    g = chart.metric(x)
    best, plane = 0.0, (0, 1)
    for i in range(chart.dim):
        for j in range(i + 1, chart.dim):
            num = abs(float(np.einsum("a,a", g[:, i], np.einsum("abcd,b,c,d->a", riem, np.eye(chart.dim)[j],
                                                               np.eye(chart.dim)[i], np.eye(chart.dim)[j]))))
            den = g[i, i] * g[j, j] - g[i, j] ** 2
            if num / den > best:
                best, plane = num / den, (i, j)
    return best, plane


def check_numerical_quality(ctx: SuiteContext) -> CheckResult:
    from .catalog import sphere

    cases = []

    def rk4_order():
        chart = sphere(1.0)
        x = np.array([1.2, 0.1])
        loop = LoopSpec.rect(x, 0, 1, 0.4)
        # Dyadic steps divide each side exactly, so halving the step halves dt.
        steps = [2.0 ** -k for k in range(4, 8)]
        ref = develop_loop(chart, loop, step=2.0 ** -10, tol=ctx.tol)
        errs = []
        for s in steps:
            h = develop_loop(chart, loop, step=s, tol=ctx.tol)
            errs.append(float(max(np.max(np.abs(h.linear - ref.linear)),
                                  np.max(np.abs(h.translation - ref.translation)))))
        order = loglog_slope(steps, errs)
        return "rk4-order", order >= 3.5, {"order": order, "errors": errs}

    def drift():
        chart = sphere(1.0)
        tr = geodesic(chart, [math.pi / 2, 0.0], [0.6, 0.8], 2 * math.pi, tol=ctx.tol)
        return "geodesic-drift", tr.speed_drift < 1e-6, {"speed_drift": float(tr.speed_drift)}

    cases.append(_guarded("rk4-order", rk4_order))
    cases.append(_guarded("geodesic-drift", drift))
    for name, cfg in ctx.configs.items():
        def scaling(name=name, cfg=cfg):
            kmax, plane = _max_curvature_plane(cfg.chart, cfg.base, cfg.tolerances)
            if kmax < cfg.tolerances.tol_curv:
                return None
            fam = small_loop_family(cfg.chart, cfg.base, (0.025, 0.05, 0.1), plane, tol=cfg.tolerances)
            eps = [e.eps for e in fam]
            s_lin = loglog_slope(eps, [e.linear_defect for e in fam])
            s_tr = loglog_slope(eps, [e.translation_norm for e in fam])
            ok = 1.8 <= s_lin <= 2.2 and s_tr >= 2.7
            return f"{name}:scaling", ok, {"plane": list(plane), "linear_slope": s_lin, "translation_slope": s_tr}
        res = _guarded(f"{name}:scaling", scaling)
        if res is not None:
            cases.append(res)
    return _finish("numerical-quality", cases)


CHECKS: list[Check] = [
    Check("rolling-sphere", "rolling the unit sphere once along the equator develops to a pure translation "
          "of length 2*pi along the rolling direction", check_rolling_sphere),
    Check("bundle-maps", "the affine-frame action, the product action, the identification between them "
          "and the extended-bundle composite are consistent", check_bundle_maps),
    Check("affine-product-action", "sampled holonomy lies in O(m) x R^m and loop concatenation composes "
          "elements", check_affine_product_action),
    Check("flat-triviality", "flat manifolds have trivial local affine holonomy", check_flat_triviality),
    Check("derham-splitting", "the tangent space splits into a flat part and invariant holonomy factors",
          check_derham_splitting),
    Check("flat-factor", "the flat factor of a product acts trivially", check_flat_factor),
    Check("product-blocks", "holonomy of a product acts factor by factor", check_product_blocks),
    Check("cartan-dichotomy", "on an irreducible factor translations are either absent or span the factor",
          check_cartan_dichotomy),
    Check("compact-iff-cones", "affine holonomy is compact exactly for products of cones, with the apex "
          "as common fixed point", check_compact_iff_cones),
    Check("einstein-semidirect", "non-cone irreducible factors give the full semidirect product",
          check_einstein_semidirect),
    Check("radial-field", "a fixed point yields a field V with grad_X V + X = 0 and grad |V|^2 = -2V",
          check_radial_field),
    Check("homothety", "the flow of V scales the metric by exp(-2t)", check_homothety),
    Check("curvature-nullity", "R(X,Y)V vanishes on cones and 2D cones are flat", check_curvature_nullity),
    Check("global-noncompactness", "iterated loops on complete non-flat catalog manifolds develop unbounded "
          "translations", check_global_noncompactness),
    Check("numerical-quality", "integrator order, small-loop scaling exponents and geodesic speed drift",
          check_numerical_quality),
]


def list_checks() -> list[tuple[str, str]]:
    return [(c.name, c.claim) for c in CHECKS]


@dataclass
class SuiteReport:
    results: list
    configs: dict
    elapsed: float

    @property
    def passed(self) -> bool:
        return all(r.status is not Status.FAIL for r in self.results)

    def to_json(self, meta: bool = True) -> dict:
        counts = {s.value: sum(r.status is s for r in self.results) for s in Status}
        out = {"checks": [r.to_json() for r in self.results], "counts": counts,
               "passed": self.passed,
               "manifolds": {name: cfg.provenance() for name, cfg in self.configs.items()}}
        if meta:
            out["meta"] = {"version": __version__, "elapsed_seconds": self.elapsed,
                           "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
        return out


def run_suite(configs: dict, seed: int = 0, tol: Tolerances = DEFAULT, only: list[str] | None = None) -> SuiteReport:
    """Run every check (or those named in ``only``) against the given configurations."""
    start = time.perf_counter()
    ctx = SuiteContext(configs, tol, seed)
    results = []
    for check in CHECKS:
        if only and check.name not in only:
            continue
        try:
            results.append(check.run(ctx))
        except HolonomyError as exc:
            results.append(CheckResult(check.name, Status.FAIL, {"error": type(exc).__name__},
                                       [str(exc)]))
    return SuiteReport(results, configs, time.perf_counter() - start)


def catalog_configs(seed: int = 0, step: float | None = None, tol_file: str | None = None) -> dict:
    return {name: RunConfig.for_catalog(name, seed, step=step, tol_file=tol_file) for name in CATALOG}
