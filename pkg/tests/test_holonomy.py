import math

import numpy as np
import pytest
from scipy.linalg import block_diag, expm

from cartanhol.affine import AffineIsometry, Compactness
from cartanhol.catalog import catalog_entry
from cartanhol.errors import EmptySample, ToleranceAmbiguity
from cartanhol.geometry import FramePoint, orthonormal_frame
from cartanhol.holonomy import (
    FactorVerdict,
    HolonomySample,
    Protocol,
    classify,
    classify_sample,
    derham_split,
    protocol_loops,
    sample_holonomy,
    translation_rank,
    verify_product_blocks,
)
from cartanhol.transport import LoopSpec


def rot(t):
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def synthetic(elements):
    m = elements[0].dim
    return HolonomySample(np.zeros(m), elements, [LoopSpec.rect(np.zeros(m), 0, 1, 0.1)] * len(elements),
                          FramePoint(np.zeros(m), np.eye(m)))


class TestSplitting:
    def test_identity_sample_is_all_flat(self):
        split = derham_split([AffineIsometry.identity(3)] * 2)
        assert split.dims == [3] and split.factors == []

    def test_rotation_block_with_fixed_axis(self):
        A = block_diag(rot(0.7), 1.0)
        split = derham_split([AffineIsometry(A, np.zeros(3)), AffineIsometry(A @ A, np.zeros(3))])
        assert np.allclose(np.abs(split.flat[:, 0]), [0, 0, 1])
        (factor,) = split.factors
        assert factor.shape == (3, 2)
        assert np.allclose(factor @ factor.T, np.diag([1.0, 1.0, 0.0]))

    def test_two_factors_are_separated_and_ordered(self):
        A = block_diag(1.0, rot(0.3), rot(1.1))
        split = derham_split([AffineIsometry(A, np.zeros(5))])
        assert split.dims == [1, 2, 2]
        assert split.invariance_defect([A]) < 1e-12

    @staticmethod
    def _tilted_pair(angle):
        """Two elements whose invariant planes differ by a rotation of ``angle`` in the (e1, e3) plane."""
        gen = np.zeros((4, 4))
        gen[0, 2], gen[2, 0] = angle, -angle
        Q = expm(gen)
        return [AffineIsometry(block_diag(rot(0.3), rot(1.1)), np.zeros(4)),
                AffineIsometry(Q @ block_diag(rot(0.5), rot(0.9)) @ Q.T, np.zeros(4))]

    def test_coupling_regimes(self):
        assert derham_split(self._tilted_pair(1e-8)).dims == [0, 2, 2]
        with pytest.raises(ToleranceAmbiguity):
            derham_split(self._tilted_pair(1e-6))
        assert derham_split(self._tilted_pair(1e-4)).dims == [0, 4]

    def test_empty_sample(self):
        with pytest.raises(EmptySample):
            derham_split([])

    def test_product_blocks_flags_rotated_element(self):
        good = AffineIsometry(block_diag(1.0, rot(0.4)), np.zeros(3))
        split = derham_split([good])
        mix = np.eye(3)
        mix[:2, :2] = rot(0.2)
        bad = AffineIsometry(mix @ good.linear, np.zeros(3))
        report = verify_product_blocks([good, good, bad], split)
        assert not report.passed and report.offending == [2]
        assert verify_product_blocks([good, good], split).passed


class TestClassifySynthetic:
    def test_intermediate_translation_rank_is_inconsistent(self):
        sample = synthetic([AffineIsometry(rot(0.5), np.zeros(2)), AffineIsometry(np.eye(2), [1.0, 0.0]),
                            AffineIsometry(rot(0.5), [0.0, 0.0])])
        rep = classify_sample(sample)
        assert rep.inconsistent
        assert rep.factors[0].translation_rank == 1

    def test_common_fixed_point(self):
        p = np.array([0.3, -0.7])
        sample = synthetic([AffineIsometry(rot(t), (np.eye(2) - rot(t)) @ p) for t in (0.2, 0.9)])
        rep = classify_sample(sample)
        assert rep.summary == "COMPACT_FIXED_POINT"
        assert np.allclose(rep.fixed_point, p, atol=1e-9)

    def test_translation_rank_threshold(self):
        b = np.array([[1.0, 0.0], [0.0, 1e-6], [2.0, 0.0]])
        assert translation_rank(b, floor=0.05)[0] == 1
        assert translation_rank(b * 1e3, floor=0.05)[0] == 1
        assert translation_rank(np.array([[1.0, 0.0], [0.0, 0.5]]), floor=0.05)[0] == 2


class TestCatalog:
    def test_flat_r3_is_trivial(self, classified):
        rep = classified("flat-r3")
        assert rep.verdict is Compactness.TRIVIAL and rep.summary == "TRIVIAL"
        assert all(h.distance_to_identity() < 1e-8 for h in rep.sample.elements)

    def test_sphere_is_full_semidirect(self, classified):
        rep = classified("sphere-s2")
        (f,) = rep.factors
        assert f.verdict is FactorVerdict.FULL_SEMIDIRECT and f.translation_rank == 2
        assert rep.summary == "FULL_SEMIDIRECT"
        assert max(np.linalg.norm(h.translation) for h in rep.sample.elements) > 1e-3

    def test_cone_over_sphere_fixes_the_apex(self, classified):
        rep = classified("cone-sphere")
        assert rep.summary == "COMPACT_FIXED_POINT"
        assert np.allclose(rep.fixed_point, [-1.0, 0.0, 0.0], atol=1e-3)
        assert rep.factors[0].fixed_point_residual < 1e-4

    @pytest.mark.parametrize("name", ["flat-r2", "sphere-s2", "hyperbolic-h2", "cone-circle", "cone-product",
                                      "flat-sphere", "paraboloid"])
    def test_splitting_soundness(self, classified, name):
        rep = classified(name)
        split = derham_split(rep.sample)
        assert sum(split.dims) == rep.sample.elements[0].dim
        assert split.invariance_defect(rep.sample.linear_parts) <= 1e-6
        basis = np.concatenate(split.subspaces, axis=1)
        assert np.allclose(basis.T @ basis, np.eye(basis.shape[1]), atol=1e-6)
        assert not rep.inconsistent and rep.product_blocks.passed

    def test_flat_times_sphere(self, classified):
        rep = classified("flat-sphere")
        assert [f.dim for f in rep.factors] == [1, 2]
        assert rep.factors[0].flat and rep.factors[0].verdict is FactorVerdict.TRIVIAL
        assert rep.product_blocks.max_flat_defect < 1e-8
        assert rep.verdict is Compactness.NONCOMPACT

    def test_product_of_cones(self, classified):
        rep = classified("cone-product")
        assert rep.verdict is Compactness.COMPACT
        assert [f.verdict for f in rep.factors] == [FactorVerdict.COMPACT_FIXED_POINT] * 2
        assert rep.product_blocks.max_off_block < 1e-6
        assert np.allclose(rep.fixed_point, [-1.0, 0.0, -1.0, 0.0], atol=1e-3)


def test_sampling_is_deterministic():
    chart, x = catalog_entry("paraboloid")
    proto = Protocol(eps_list=(0.1,), n_random_polygons=2, seed=5)
    a, b = sample_holonomy(chart, x, proto), sample_holonomy(chart, x, proto)
    assert a.to_json() == b.to_json()
    assert sample_holonomy(chart, x, proto.replace(workers=3)).to_json() == a.to_json()
    other = sample_holonomy(chart, x, proto.replace(seed=6))
    assert other.to_json()["loops"] != a.to_json()["loops"]


def test_protocol_contents():
    chart, x = catalog_entry("flat-sphere")
    loops = protocol_loops(chart, x, np.eye(3), Protocol(eps_list=(0.1, 0.2), n_random_polygons=3))
    kinds = [lp.kind for lp in loops]
    assert kinds.count("COORD_RECT") == 3 * 2 * 4  # planes x eps x quadrants
    assert kinds.count("PARAM_CURVE") == 1  # one periodic axis
    assert kinds.count("GEODESIC_POLYGON") == 3


def test_frame_covariance():
    chart, x = catalog_entry("sphere-s2")
    proto = Protocol(eps_list=(0.1, 0.2), n_random_polygons=0)
    E = orthonormal_frame(chart, x).columns
    Q = rot(0.9)
    base = classify(chart, x, proto)
    turned = classify(chart, x, proto, frame=FramePoint(x, E @ Q))
    for h, h2 in zip(base.sample.elements, turned.sample.elements):
        c = h.conjugate(Q)
        assert np.allclose(h2.linear, c.linear, atol=1e-8) and np.allclose(h2.translation, c.translation, atol=1e-8)
    assert base.summary == turned.summary
    assert [f.dim for f in base.factors] == [f.dim for f in turned.factors]
    assert base.factors[0].fixed_point_residual == pytest.approx(turned.factors[0].fixed_point_residual, abs=1e-8)


def test_verdicts_stable_under_step_halving(classified):
    for name in ["sphere-s2", "cone-circle"]:
        chart, x = catalog_entry(name)
        finer = classify(chart, x, Protocol(seed=0, step=5e-4))
        assert finer.summary == classified(name).summary
