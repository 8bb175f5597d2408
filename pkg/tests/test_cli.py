import hashlib
import json
import xml.etree.ElementTree as ET

import pytest

from xtalkgst import circuits, cli, simulate


def run(*args):
    return cli.main([str(a) for a in args])


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    noise_file = d / "noise.json"
    noise_file.write_text(json.dumps({"depolarizing": 1e-3, "layer": {"h": {"ZZ": 0.05}}}))
    assert run("design", "--lmax", 2, "--out", d / "design.txt") == 0
    assert run("simulate", "--model", noise_file, "--design", d / "design.txt", "--shots", 500, "--seed", 3,
               "--out", d / "data.jsonl") == 0
    assert run("fit", "--dataset", d / "data.jsonl", "--out", d / "fits.json") == 0
    assert run("select", "--dataset", d / "data.jsonl", "--fits", d / "fits.json", "--no-diamond",
               "--out", d / "select.json") == 0
    assert run("wildcard", "--dataset", d / "data.jsonl", "--fits", d / "fits.json",
               "--family", "crosstalk-free", "--out", d / "wildcard.json") == 0
    assert run("design", "--rb", "--rb-depths", "2,8,32,64", "--rb-per-depth", 4, "--seed", 5,
               "--rb-metadata", d / "rb_meta.json", "--out", d / "rb_design.txt") == 0
    assert run("simulate", "--model", noise_file, "--design", d / "rb_design.txt", "--shots", 200, "--seed", 4,
               "--out", d / "rb_data.jsonl") == 0
    assert run("rb", "--dataset", d / "rb_data.jsonl", "--rb-metadata", d / "rb_meta.json", "--bootstrap", 20,
               "--seed", 1, "--out", d / "rb.json") == 0
    fragments = [d / n for n in ("fits.json", "select.json", "wildcard.json", "rb.json")]
    assert run("report", *fragments, "--out", d / "report") == 0
    return d, noise_file, fragments


class TestPipeline:
    def test_design_file(self, pipeline):
        d, _, _ = pipeline
        lines = (d / "design.txt").read_text().splitlines()
        assert len(lines) == len(circuits.build_gst_design(2).circuits)
        assert [circuits.serialize(circuits.parse(s)) for s in lines] == lines

    def test_fit_fragment(self, pipeline):
        d, _, _ = pipeline
        doc = json.loads((d / "fits.json").read_text())
        assert doc["kind"] == "fit" and doc["converged"] is True
        assert set(doc["fits"]) == {"crosstalk-free", "context-dependent", "general"}
        for entry in doc["fits"].values():
            assert {"lambda", "k", "n_sigma", "diagnostics"} <= set(entry["result"])

    def test_comparison_selects_general_for_zz(self, pipeline):
        d, _, _ = pipeline
        comp = json.loads((d / "select.json").read_text())["comparison"]
        assert comp["selected"] == "general"
        assert set(comp["models"]["crosstalk-free"]) >= {"n_sigma", "lambda", "wildcard", "avg_diamond"}

    def test_report_contents(self, pipeline):
        d, _, _ = pipeline
        doc = json.loads((d / "report" / "report.json").read_text())
        assert set(doc["results"]) == {"fits", "gates", "comparison", "wildcard", "rb"}
        assert set(doc["provenance"]["inputs"]) == {"fits.json", "select.json", "wildcard.json", "rb.json"}
        assert doc["version"] == 1

    def test_svgs_well_formed(self, pipeline):
        d, _, _ = pipeline
        svgs = sorted((d / "report").glob("*.svg"))
        names = {p.name for p in svgs}
        assert "comparison.svg" in names
        assert {"rb_q0_idle.svg", "rb_q0_driven.svg", "rb_q1_idle.svg", "rb_q1_driven.svg"} <= names
        assert any(n.startswith("hamiltonian_context-dependent_") for n in names)
        for p in svgs:
            assert ET.parse(p).getroot().tag.endswith("svg")

    def test_report_rerun_is_byte_identical(self, pipeline, tmp_path):
        d, _, fragments = pipeline
        assert run("report", *fragments, "--out", tmp_path) == 0
        for p in (d / "report").iterdir():
            assert sha(p) == sha(tmp_path / p.name)

    def test_simulate_and_fit_reruns_are_byte_identical(self, pipeline, tmp_path):
        d, noise_file, _ = pipeline
        assert run("simulate", "--model", noise_file, "--design", d / "design.txt", "--shots", 500, "--seed", 3,
                   "--out", tmp_path / "data.jsonl") == 0
        assert sha(tmp_path / "data.jsonl") == sha(d / "data.jsonl")
        for name in ("a.json", "b.json"):
            assert run("fit", "--dataset", d / "data.jsonl", "--family", "crosstalk-free",
                       "--out", tmp_path / name) == 0
        assert sha(tmp_path / "a.json") == sha(tmp_path / "b.json")

    def test_config_file_and_override(self, pipeline, tmp_path):
        d, noise_file, _ = pipeline
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": str(noise_file), "design": str(d / "design.txt"), "shots": 500,
                                   "seed": 99}))
        assert run("simulate", "--config", cfg, "--seed", 3, "--out", tmp_path / "data.jsonl") == 0
        assert sha(tmp_path / "data.jsonl") == sha(d / "data.jsonl")

    def test_eps_sweep(self, pipeline, tmp_path):
        d, _, _ = pipeline
        assert run("simulate", "--design", d / "design.txt", "--eps-sweep", 3, "--shots", 10, "--seed", 0,
                   "--out", tmp_path / "sweep") == 0
        files = sorted((tmp_path / "sweep").glob("dataset_*.jsonl"))
        assert len(files) == 3
        eps = [simulate.read_dataset(f).metadata["eps"] for f in files]
        assert eps[0] == pytest.approx(1e-3) and eps[-1] == pytest.approx(3e-2)


class TestExitCodes:
    def test_non_convergence_is_3(self, pipeline, tmp_path):
        d, _, _ = pipeline
        code = run("fit", "--dataset", d / "data.jsonl", "--family", "crosstalk-free", "--max-iter", 2,
                   "--out", tmp_path / "f.json")
        assert code == 3
        assert json.loads((tmp_path / "f.json").read_text())["converged"] is False

    def test_missing_input_is_4(self, tmp_path):
        assert run("fit", "--dataset", tmp_path / "nope.jsonl", "--out", tmp_path / "f.json") == 4

    def test_unwritable_output_is_4(self, pipeline, tmp_path):
        d, _, _ = pipeline
        assert run("design", "--lmax", 1, "--out", "/proc/xtalkgst/none/design.txt") == 4

    def test_missing_seed_is_2(self, pipeline, tmp_path):
        d, noise_file, _ = pipeline
        assert run("simulate", "--model", noise_file, "--design", d / "design.txt",
                   "--out", tmp_path / "x.jsonl") == 2

    def test_bad_lmax_is_2(self, tmp_path):
        assert run("design", "--lmax", 3, "--out", tmp_path / "d.txt") == 2

    def test_empty_report_input_is_2(self, tmp_path):
        assert run("report", "--out", tmp_path) == 2

    def test_foreign_fragment_is_2(self, tmp_path):
        bad = tmp_path / "x.json"
        bad.write_text('{"format": "other"}')
        assert run("report", bad, "--out", tmp_path / "r") == 2

    def test_malformed_dataset_is_2(self, tmp_path):
        bad = tmp_path / "d.jsonl"
        bad.write_text("not json\n")
        assert run("fit", "--dataset", bad, "--out", tmp_path / "f.json") == 2

    def test_bad_circuit_in_design_is_2(self, tmp_path):
        design = tmp_path / "d.txt"
        design.write_text("[Gzpi2:0]\n")
        noise_file = tmp_path / "n.json"
        noise_file.write_text("{}")
        assert run("simulate", "--model", noise_file, "--design", design, "--seed", 0,
                   "--out", tmp_path / "x.jsonl") == 2

    def test_unknown_family_is_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run("fit", "--dataset", tmp_path / "d.jsonl", "--family", "everything", "--out", tmp_path / "f.json")
        assert exc.value.code == 2
