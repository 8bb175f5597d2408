import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from xtalkgst import errorgen, models, report

SVG = "{http://www.w3.org/2000/svg}"


def rb_cell(context="idle"):
    return {
        "qubit": 0, "context": context, "A": 0.5, "B": 0.48, "p": 0.996, "r": 0.002,
        "r_halfwidth": 0.0003,
        "successes": {"2": [0.99, 0.98, 0.97], "16": [0.95, 0.93], "128": [0.8, 0.75, 0.77]},
    }


def comparison():
    return {
        "models": {
            "crosstalk-free": {"n_params": 86, "lambda": 1500.5, "k": 1438, "n_sigma": 1.16, "wildcard": 0.0,
                               "avg_diamond": None},
            "general": {"n_params": 2223, "lambda": 1200.0, "k": 1, "n_sigma": -0.2, "wildcard": 0.0,
                        "avg_diamond": 1e-3},
        },
        "gamma": {"context-dependent/crosstalk-free": 0.5},
        "selected": "crosstalk-free",
    }


def numbers_are_wrapped(obj):
    if isinstance(obj, dict):
        if set(obj) == {"value", "halfwidth"}:
            return not isinstance(obj["value"], dict) and (
                obj["halfwidth"] is None or isinstance(obj["halfwidth"], (int, float)))
        return all(numbers_are_wrapped(v) for v in obj.values())
    if isinstance(obj, list):
        return all(numbers_are_wrapped(v) for v in obj)
    return not isinstance(obj, (int, float)) or isinstance(obj, bool)


class TestJSON:
    def test_with_halfwidths_wraps_every_number(self):
        doc = report.with_halfwidths({"a": 1, "b": [2.5, {"c": np.float64(3)}], "d": "x", "e": True,
                                      "f": {"value": 1.0, "halfwidth": 0.1}, "g": np.arange(2)})
        assert doc["a"] == {"value": 1, "halfwidth": None}
        assert doc["f"] == {"value": 1.0, "halfwidth": 0.1}
        assert doc["d"] == "x" and doc["e"] is True
        assert numbers_are_wrapped(doc)

    def test_non_finite_becomes_null(self):
        assert report.with_halfwidths(float("nan")) == {"value": None, "halfwidth": None}

    def test_unserializable(self):
        with pytest.raises(TypeError):
            report.with_halfwidths(object())

    def test_golden_document(self, tmp_path, monkeypatch):
        monkeypatch.setattr(report, "tool_version", lambda: "0.0.0")
        inp = tmp_path / "data.jsonl"
        inp.write_bytes(b"abc")
        doc = report.build_report({"seed": 1}, {"comparison": {"selected": "general", "gamma": {"a/b": 2.25}}},
                                  [inp])
        path = tmp_path / "report.json"
        report.write_json(path, doc)
        expected = """{
  "config": {
    "seed": 1
  },
  "provenance": {
    "inputs": {
      "data.jsonl": "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    },
    "tool": "xtalkgst",
    "tool_version": "0.0.0"
  },
  "results": {
    "comparison": {
      "gamma": {
        "a/b": {
          "halfwidth": null,
          "value": 2.25
        }
      },
      "selected": "general"
    }
  },
  "version": 1
}
"""
        assert path.read_text() == expected

    def test_write_is_atomic_and_leaves_no_temp(self, tmp_path):
        report.write_text(tmp_path / "a.txt", "one")
        report.write_text(tmp_path / "a.txt", "two")
        assert (tmp_path / "a.txt").read_text() == "two"
        assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]


class TestGateReports:
    def test_factored_family_reports(self):
        m = models.instantiate(models.CONTEXT_DEPENDENT)
        reps = report.gate_error_reports(m)
        assert len(reps) == 2 * 3 * 3
        d = reps[0].to_dict()
        assert set(d["hamiltonian_mrad"]) == {"X", "Y", "Z"}
        assert d["hamiltonian_mrad"]["X"] == {"value": pytest.approx(0.0, abs=1e-9), "halfwidth": None}

    def test_general_family_reports_layers(self):
        reps = report.gate_error_reports(models.instantiate(models.GENERAL))
        assert len(reps) == 9 and all(r.context == "layer" for r in reps)
        assert len(reps[0].to_dict()["hamiltonian_mrad"]) == 15

    def test_attach_halfwidths(self):
        m = models.instantiate(models.CROSSTALK_FREE)
        keys = report.default_quantities(m)
        reps = report.attach_halfwidths(report.gate_error_reports(m), {k: 1e-3 for k in keys})
        d = reps[0].to_dict()
        assert d["hamiltonian_mrad"]["Z"]["halfwidth"] == pytest.approx(1.0)

    def test_default_quantities_general_is_zz(self):
        assert set(report.default_quantities(models.instantiate(models.GENERAL))) == {"zz"}


class TestSVG:
    def parse(self, text):
        root = ET.fromstring(text)
        assert root.tag == SVG + "svg"
        return root

    def test_decay_curve(self):
        root = self.parse(report.decay_curve_svg(rb_cell()))
        assert len(root.findall(SVG + "polyline")) == 1
        assert len(root.findall(SVG + "rect")) == 1 + 3  # background plus one box per depth

    def test_decay_curve_accepts_wrapped_numbers(self):
        wrapped = report.with_halfwidths(rb_cell())
        assert report.decay_curve_svg(wrapped) == report.decay_curve_svg(rb_cell())

    def test_arrows_one_line_and_ellipse_per_context(self):
        entries = [{"context": c, "hx": 3.0 * i, "hy": -1.0, "hx_halfwidth": 0.5, "hy_halfwidth": None}
                   for i, c in enumerate(("Gi", "Gxpi2", "Gypi2"))]
        root = self.parse(report.hamiltonian_arrows_svg(entries, "q0:Gi"))
        ellipses = root.findall(SVG + "ellipse")
        assert len(ellipses) == 3
        # two axis lines plus one arrow per context, each arrow starting at the centre
        lines = root.findall(SVG + "line")
        assert len(lines) == 2 + 3
        assert all(ln.get("x1") == "180" and ln.get("y1") == "180" for ln in lines[2:])

    def test_escapes_text(self):
        comp = comparison()
        comp["selected"] = "<a & b>"
        self.parse(report.comparison_table_svg(comp))

    def test_comparison_table(self):
        root = self.parse(report.comparison_table_svg(report.with_halfwidths(comparison())))
        texts = [t.text for t in root.iter(SVG + "text")]
        assert "crosstalk-free" in texts and "2223" in texts and "-" in texts
        assert "selected: crosstalk-free" in texts

    def test_write_figures(self, tmp_path):
        reps = report.gate_error_reports(models.instantiate(models.CROSSTALK_FREE))
        doc = report.build_report({}, {
            "comparison": comparison(),
            "gates": {"crosstalk-free": [r.to_dict() for r in reps]},
            "rb": {"cells": [rb_cell("idle"), rb_cell("driven")]},
        })
        names = report.write_figures(doc, tmp_path)
        assert names[0] == "comparison.svg"
        assert "hamiltonian_crosstalk-free_q0_Gxpi2.svg" in names
        assert names[-2:] == ["rb_q0_idle.svg", "rb_q0_driven.svg"]
        assert len(names) == 1 + 6 + 2
        for n in names:
            self.parse((tmp_path / n).read_text())
        assert numbers_are_wrapped(doc["results"])
        json.dumps(doc)


class TestErrorReportIntegration:
    def test_injected_over_rotation_in_mrad(self):
        g = errorgen.build_gate("Gxpi2", [5e-3, 0, 0], [0, 0, 0])
        ham, sto, res = errorgen.decompose_gate(g, "Gxpi2")
        rep = errorgen.GateErrorReport("q0:Gxpi2", "Gi", ham, sto, res)
        assert rep.to_dict()["hamiltonian_mrad"]["X"]["value"] == pytest.approx(5.0, abs=1e-6)
