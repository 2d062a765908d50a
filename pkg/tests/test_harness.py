import json
import math

import numpy as np
import pytest

from cartanhol.catalog import CATALOG, catalog_entry
from cartanhol.cli import main
from cartanhol.errors import ConfigInvalid
from cartanhol.harness import (
    CHECKS,
    EXPECTED,
    EvidenceVerdict,
    RunConfig,
    Status,
    global_noncompactness_evidence,
    run_suite,
)
from cartanhol.serialization import dumps, format_float, write_atomic


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


class TestConfig:
    def test_catalog_config(self):
        cfg = RunConfig.from_dict({"manifold": "sphere-s2", "seed": 3})
        assert cfg.protocol.seed == 3 and cfg.chart.dim == 2
        assert np.allclose(cfg.base, CATALOG["sphere-s2"][1])

    @pytest.mark.parametrize("data", [
        {},
        {"manifold": "no-such-manifold", "seed": 0},
        {"manifold": "sphere-s2", "seed": 0, "protocol": {"eps_list": []}},
        {"manifold": "sphere-s2", "seed": 0, "extra": 1},
        {"manifold": "sphere-s2", "seed": 0, "base": [0.0, 0.0]},
        {"manifold": "sphere-s2", "seed": 0, "base": [1.0]},
        {"manifold": "sphere-s2", "seed": 0, "tolerances": {"tol_nonsense": 1.0}},
        {"manifold": "sphere-s2"},
        {"manifold": {"kind": "cone"}, "base": [1.0, 0.0], "seed": 0},
        {"manifold": {"kind": "sphere"}, "seed": 0},
    ])
    def test_invalid_configs(self, data):
        with pytest.raises(ConfigInvalid):
            RunConfig.from_dict(data)

    def test_seed_optional_without_random_polygons(self):
        cfg = RunConfig.from_dict({"manifold": "flat-r2", "protocol": {"n_random_polygons": 0}})
        assert cfg.seed is None

    def test_overrides(self, tmp_path):
        tol_file = write(tmp_path, {"tol_fp": 2e-4}, "tol.json")
        cfg = RunConfig.from_dict({"manifold": "flat-r2", "seed": 1, "tolerances": {"tol_rank": 1e-3}},
                                  seed=9, step=5e-4, tol_file=tol_file)
        assert cfg.protocol.seed == 9 and cfg.protocol.step == 5e-4
        assert cfg.tolerances.tol_fp == 2e-4 and cfg.tolerances.tol_rank == 1e-3

    def test_descriptor_config(self):
        cfg = RunConfig.from_dict({"manifold": {"kind": "product", "factors": [{"kind": "flat", "dim": 1},
                                                                             {"kind": "hyperbolic"}]},
                                   "base": [0.0, 0.0, 1.0], "seed": 0})
        assert cfg.chart.dim == 3

    def test_schema_file_matches_package_copy(self):
        from pathlib import Path

        import cartanhol

        shipped = Path(cartanhol.__file__).with_name("config.schema.json").read_text()
        docs = (Path(__file__).parents[1] / "docs" / "config.schema.json").read_text()
        assert json.loads(shipped) == json.loads(docs)


class TestSerialization:
    def test_float_format(self):
        assert format_float(0.1) == "0.10000000000000001"
        assert format_float(2.0) == "2.0"
        assert float(format_float(math.pi)) == math.pi

    def test_dumps_is_sorted_and_parseable(self):
        text = dumps({"b": np.float64(1.5), "a": [np.int64(2), True, None], "c": {"z": np.arange(2.0)}})
        assert text.index('"a"') < text.index('"b"') < text.index('"c"')
        assert json.loads(text) == {"a": [2, True, None], "b": 1.5, "c": {"z": [0.0, 1.0]}}

    def test_atomic_write(self, tmp_path):
        path = tmp_path / "sub" / "out.json"
        write_atomic(path, "hello\n")
        assert path.read_text() == "hello\n"
        assert list(path.parent.iterdir()) == [path]


class TestEvidence:
    def test_sphere_translations_grow_linearly(self):
        chart, x = catalog_entry("sphere-s2")
        rep = global_noncompactness_evidence(chart, x, 5)
        assert rep.verdict is EvidenceVerdict.EVIDENCE_NONCOMPACT
        assert np.allclose(rep.norms, 2 * math.pi * np.arange(1, 6), atol=1e-3)
        assert "not a proof" in rep.to_json()["note"]

    def test_flat_is_not_applicable(self):
        chart, x = catalog_entry("flat-r2")
        assert global_noncompactness_evidence(chart, x, 3).verdict is EvidenceVerdict.NOT_APPLICABLE

    def test_cone_is_bounded(self):
        chart, x = catalog_entry("cone-circle")
        rep = global_noncompactness_evidence(chart, x, 5)
        assert rep.verdict is EvidenceVerdict.BOUNDED
        assert max(rep.norms) <= 2.0 + 1e-9


class TestSuite:
    def test_check_names_are_unique_and_described(self):
        names = [c.name for c in CHECKS]
        assert len(names) == len(set(names))
        assert all(c.claim for c in CHECKS)

    def test_every_catalog_entry_has_expectations(self):
        assert set(EXPECTED) == set(CATALOG)

    def test_single_config_run(self):
        cfg = RunConfig.for_catalog("cone-circle", 0)
        rep = run_suite({"cone-circle": cfg}, only=["compact-iff-cones", "radial-field", "bundle-maps"])
        assert [r.status for r in rep.results] == [Status.PASS] * 3

    def test_custom_manifold_skips_expectation_checks(self):
        cfg = RunConfig.from_dict({"manifold": {"kind": "paraboloid", "a": 0.3}, "base": [1.0, 0.0], "seed": 0,
                                   "protocol": {"eps_list": [0.1], "n_random_polygons": 1}})
        rep = run_suite({"paraboloid": cfg}, only=["compact-iff-cones", "cartan-dichotomy"])
        statuses = {r.name: r.status for r in rep.results}
        assert statuses == {"compact-iff-cones": Status.SKIP, "cartan-dichotomy": Status.PASS}


class TestCli:
    def run(self, capsys, *argv):
        code = main(list(argv))
        out = capsys.readouterr()
        return code, out.out, out.err

    def test_catalog_list(self, capsys):
        code, out, _ = self.run(capsys, "catalog", "list")
        assert code == 0 and all(name in out for name in CATALOG)

    def test_classify_flat(self, capsys, tmp_path):
        cfg = write(tmp_path, {"manifold": "flat-r3", "seed": 0})
        code, out, _ = self.run(capsys, "classify", cfg, "--no-meta")
        data = json.loads(out)
        assert code == 0 and data["verdict"] == "TRIVIAL" and "meta" not in data
        assert data["provenance"]["tolerances"]["tol_fp"] == 1e-4

    def test_classify_sphere_to_file(self, capsys, tmp_path):
        cfg = write(tmp_path, {"manifold": "sphere-s2", "seed": 0, "outputs": {"report": str(tmp_path / "r.json")}})
        code, out, _ = self.run(capsys, "classify", cfg)
        data = json.loads((tmp_path / "r.json").read_text())
        assert code == 0 and out == ""
        assert data["summary"] == "FULL_SEMIDIRECT" and "timestamp" in data["meta"]

    def test_classify_cone_attaches_certificate(self, capsys, tmp_path):
        cfg = write(tmp_path, {"manifold": "cone-circle", "seed": 0})
        code, out, _ = self.run(capsys, "classify", cfg, "--no-meta")
        assert code == 0 and json.loads(out)["cone_certificate"]["verdict"] == "CONE"

    def test_cone_check_failure_is_structured(self, capsys, tmp_path):
        cfg = write(tmp_path, {"manifold": "sphere-s2", "seed": 0})
        code, out, _ = self.run(capsys, "cone-check", cfg, "--no-meta")
        data = json.loads(out)
        assert code == 1 and data["status"] == "FAIL" and data["error"] == "NoFixedPoint"

    def test_config_error_exit_code(self, capsys, tmp_path):
        cfg = write(tmp_path, {"manifold": "sphere-s2"})
        code, _, err = self.run(capsys, "classify", cfg)
        assert code == 2 and "seed" in err
        code, _, _ = self.run(capsys, "holonomy", str(tmp_path / "missing.json"))
        assert code == 2
        (tmp_path / "broken.json").write_text("{not json")
        assert self.run(capsys, "develop", str(tmp_path / "broken.json"))[0] == 2

    def test_develop_csv(self, capsys, tmp_path):
        cfg = write(tmp_path, {"manifold": "sphere-s2", "seed": 0})
        code, out, _ = self.run(capsys, "develop", cfg, "--step", "0.01")
        rows = out.splitlines()
        assert code == 0 and rows[0].startswith("t,dev_1")
        assert float(rows[-1].split(",")[2]) == pytest.approx(2 * math.pi, abs=1e-6)

    def test_holonomy_sample(self, capsys, tmp_path):
        cfg = write(tmp_path, {"manifold": "flat-r2", "seed": 0, "protocol": {"eps_list": [0.1]}})
        code, out, _ = self.run(capsys, "holonomy", cfg, "--no-meta")
        data = json.loads(out)
        assert code == 0 and len(data["elements"]) == len(data["loops"])

    def test_evidence(self, capsys, tmp_path):
        cfg = write(tmp_path, {"manifold": "sphere-s2", "seed": 0, "noncompactness_k": 3})
        code, out, _ = self.run(capsys, "evidence", cfg, "--no-meta")
        assert code == 0 and json.loads(out)["verdict"] == "EVIDENCE_NONCOMPACT"

    def test_verify_list(self, capsys):
        code, out, _ = self.run(capsys, "verify", "--list")
        assert code == 0
        assert [line.split()[0] for line in out.splitlines()] == [c.name for c in CHECKS]

    def test_verify_needs_a_target(self, capsys, tmp_path):
        assert self.run(capsys, "verify")[0] == 2
        cfg = write(tmp_path, {"manifold": "flat-r2", "seed": 0})
        assert self.run(capsys, "verify", cfg, "--all")[0] == 2

    def test_verify_single_config(self, capsys, tmp_path):
        cfg = write(tmp_path, {"manifold": "flat-r2", "seed": 0})
        code, out, err = self.run(capsys, "verify", cfg, "--no-meta", "--check", "flat-triviality",
                                  "--check", "product-blocks")
        data = json.loads(out)
        assert code == 0 and data["passed"] and data["counts"]["PASS"] == 2
        assert "PASS flat-triviality" in err
