"""``xtalkgst`` command-line interface.

Every command accepts ``--config FILE`` with a JSON object whose keys mirror
the long flags (dashes or underscores); explicit flags override the file.
Exit codes: 0 success, 2 invalid input, 3 a fit did not converge, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import circuits, fit, models, noise, rb, report, select, simulate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3
EXIT_IO = 4

FRAGMENT_FORMAT = "xtalkgst-fragment"

log = logging.getLogger("xtalkgst")


class ValidationError(ValueError):
    pass


# --- configuration --------------------------------------------------------------

_DEFAULTS = {
    "lmax": 8,
    "shots": 1000,
    "seed": None,
    "family": None,
    "alpha": 0.05,
    "gamma_threshold": select.GAMMA_THRESHOLD,
    "bootstrap": 0,
    "max_iter": fit.FitConfig.max_iter,
    "starts": fit.FitConfig.starts,
    "rb_depths": "2,4,8,16,32,64,128,256",
    "rb_per_depth": 30,
    "eps_sweep": 0,
    "eps_min": 1e-3,
    "eps_max": 3e-2,
    "no_diamond": False,
}


def _resolve(args) -> argparse.Namespace:
    """Merge config-file values under explicit flags and fill defaults."""
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ValidationError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    out = vars(args).copy()
    for key, value in out.items():
        if value is None and key in cfg:
            out[key] = cfg[key]
    for key, value in _DEFAULTS.items():
        if out.get(key) is None and key in out:
            out[key] = value
    return argparse.Namespace(**out)


def _require(ns, *names):
    missing = [n for n in names if getattr(ns, n, None) in (None, "", [])]
    if missing:
        raise ValidationError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _check_input(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"input file not found: {path}")


def _check_output(path, directory=False):
    target = path if directory else (os.path.dirname(os.path.abspath(path)) or ".")
    if directory:
        os.makedirs(target, exist_ok=True)
    if not os.path.isdir(target) or not os.access(target, os.W_OK):
        raise PermissionError(f"cannot write to {target}")


def _families(ns) -> list:
    fams = ns.family or list(models.FAMILIES)
    if isinstance(fams, str):
        fams = [fams]
    bad = [f for f in fams if f not in models.FAMILIES]
    if bad:
        raise ValidationError(f"unknown model family {bad[0]!r}; choose from {', '.join(models.FAMILIES)}")
    return sorted(set(fams), key=models.FAMILIES.index)


def _fit_config(ns) -> fit.FitConfig:
    return fit.FitConfig(max_iter=int(ns.max_iter), starts=int(ns.starts), seed=int(ns.seed or 0))


def _write_fragment(path, kind: str, payload: dict, config: dict, inputs) -> None:
    doc = {
        "format": FRAGMENT_FORMAT,
        "kind": kind,
        "config": report._plain(config),
        "inputs": {os.path.basename(p): report.file_sha256(p) for p in inputs},
        **payload,
    }
    report.write_json(path, doc)


def _read_fragment(path) -> dict:
    _check_input(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != FRAGMENT_FORMAT:
        raise ValidationError(f"{path} is not an xtalkgst result file")
    return doc


def _load_fits(path, ds) -> dict:
    doc = _read_fragment(path)
    if doc["kind"] != "fit":
        raise ValidationError(f"{path} does not contain fits")
    out = {}
    batch = None
    for tag, entry in doc["fits"].items():
        m = models.GateSetModel.from_dict(entry["model"])
        obj = fit.Objective(tag, ds, batch)
        batch = obj.batch
        out[tag] = fit._finish(obj, m.theta, entry["result"]["diagnostics"])
    return out


# --- commands ---------------------------------------------------------------------

def cmd_design(ns) -> int:
    _require(ns, "out")
    _check_output(ns.out)
    if ns.rb:
        _require(ns, "seed", "rb_metadata")
        depths = [int(x) for x in str(ns.rb_depths).split(",")]
        rcs = [rc for mode in circuits.RB_MODES
               for rc in circuits.sample_rb_circuits(depths, int(ns.rb_per_depth), mode, int(ns.seed))]
        unique = list({circuits.serialize(rc.circuit): rc.circuit for rc in rcs}.values())
        circuits.write_design(unique, ns.out)
        rb.write_rb_metadata(rcs, ns.rb_metadata)
        log.info("wrote %d RB circuits (%d unique)", len(rcs), len(unique))
        return EXIT_OK
    lmax = int(ns.lmax)
    design = circuits.build_gst_design(lmax)
    circuits.write_design(design.circuits, ns.out)
    log.info("wrote %d circuits for lmax=%d", len(design.circuits), lmax)
    return EXIT_OK


def _truth_model(path) -> models.GateSetModel:
    _check_input(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "theta" in doc:
        return models.GateSetModel.from_dict(doc)
    return noise.build_noise_model(doc.get("noise", doc))


def cmd_simulate(ns) -> int:
    _require(ns, "design", "out", "seed")
    _check_input(ns.design)
    circs = circuits.read_design(ns.design)
    if len({circuits.serialize(c) for c in circs}) != len(circs):
        raise ValidationError("design contains duplicate circuits")
    shots = int(ns.shots)
    if shots <= 0:
        raise ValidationError("--shots must be positive")
    if int(ns.eps_sweep) > 0:
        _check_output(ns.out, directory=True)
        background = {}
        if ns.model:
            _check_input(ns.model)
            with open(ns.model, encoding="utf-8") as fh:
                background = json.load(fh)
        eps_values = np.geomspace(float(ns.eps_min), float(ns.eps_max), int(ns.eps_sweep))
        for i, eps in enumerate(eps_values):
            truth = noise.build_noise_model(noise.zz_noise(float(eps), background))
            ds = simulate.sample(truth, circs, shots, int(ns.seed), {"eps": float(eps)})
            simulate.write_dataset(ds, os.path.join(ns.out, f"dataset_{i:02d}.jsonl"))
        return EXIT_OK
    _require(ns, "model")
    _check_output(ns.out)
    truth = _truth_model(ns.model)
    ds = simulate.sample(truth, circs, shots, int(ns.seed))
    simulate.write_dataset(ds, ns.out)
    return EXIT_OK


def _read_ds(path) -> simulate.Dataset:
    _check_input(path)
    return simulate.read_dataset(path)


def cmd_fit(ns) -> int:
    _require(ns, "dataset", "out")
    _check_output(ns.out)
    fams = _families(ns)
    ds = _read_ds(ns.dataset)
    cfg = _fit_config(ns)
    results = fit.fit_nested(ds, fams, cfg)
    entries = {}
    converged = True
    for tag, res in results.items():
        halfwidths = {}
        if int(ns.bootstrap) > 0:
            boot = fit.bootstrap(res, ds, report.default_quantities, int(ns.bootstrap), int(ns.seed or 0), cfg)
            halfwidths = boot.halfwidths
        gates = report.attach_halfwidths(report.gate_error_reports(res.model), halfwidths)
        entries[tag] = {
            "result": res.to_dict(),
            "model": res.model.to_dict(),
            "gates": [g.to_dict() for g in gates],
            "bootstrap_halfwidths": halfwidths,
        }
        converged &= res.converged
        if not res.converged:
            log.warning("%s fit did not converge: %s", tag, res.diagnostics.get("message"))
    config = {"families": fams, "fit": cfg.to_dict(), "bootstrap": int(ns.bootstrap)}
    _write_fragment(ns.out, "fit", {"fits": entries, "converged": converged}, config, [ns.dataset])
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_select(ns) -> int:
    _require(ns, "dataset", "fits", "out")
    _check_output(ns.out)
    ds = _read_ds(ns.dataset)
    fits = _load_fits(ns.fits, ds)
    comp = select.compare(fits, ds, float(ns.alpha), float(ns.gamma_threshold), diamond=not ns.no_diamond)
    config = {"alpha": float(ns.alpha), "gamma_threshold": float(ns.gamma_threshold)}
    _write_fragment(ns.out, "comparison", {"comparison": comp.to_dict()}, config, [ns.dataset, ns.fits])
    return EXIT_OK


def cmd_wildcard(ns) -> int:
    _require(ns, "dataset", "fits", "out")
    _check_output(ns.out)
    ds = _read_ds(ns.dataset)
    fits = _load_fits(ns.fits, ds)
    fams = [f for f in _families(ns) if f in fits]
    if not fams:
        raise ValidationError("none of the requested families is present in the fit file")
    out = {tag: select.wildcard_fit(fits[tag], ds, float(ns.alpha)).to_dict() for tag in fams}
    _write_fragment(ns.out, "wildcard", {"wildcard": out}, {"alpha": float(ns.alpha)}, [ns.dataset, ns.fits])
    return EXIT_OK


def cmd_rb(ns) -> int:
    _require(ns, "dataset", "rb_metadata", "out")
    _check_output(ns.out)
    ds = _read_ds(ns.dataset)
    _check_input(ns.rb_metadata)
    rcs = rb.read_rb_metadata(ns.rb_metadata)
    replicates = int(ns.bootstrap) or 200
    res = rb.analyze_rb(ds, rcs, replicates=replicates, seed=int(ns.seed or 0))
    config = {"bootstrap": replicates, "seed": int(ns.seed or 0)}
    _write_fragment(ns.out, "rb", {"rb": res.to_dict()}, config, [ns.dataset, ns.rb_metadata])
    return EXIT_OK


def cmd_report(ns) -> int:
    _require(ns, "out")
    if not ns.fragments:
        raise ValidationError("no result files given")
    docs = [(p, _read_fragment(p)) for p in ns.fragments]
    _check_output(ns.out, directory=True)
    sections, config = {}, {}
    for path, doc in docs:
        kind = doc["kind"]
        config[kind] = doc.get("config", {})
        if kind == "fit":
            sections["fits"] = {t: e["result"] for t, e in doc["fits"].items()}
            sections["gates"] = {t: e["gates"] for t, e in doc["fits"].items()}
        elif kind == "comparison":
            sections["comparison"] = doc["comparison"]
        elif kind == "wildcard":
            sections["wildcard"] = doc["wildcard"]
        elif kind == "rb":
            sections["rb"] = doc["rb"]
        else:
            raise ValidationError(f"{path}: unknown result kind {kind!r}")
    doc = report.build_report(config, sections, [p for p, _ in docs])
    report.write_json(os.path.join(ns.out, "report.json"), doc)
    report.write_figures(doc, ns.out)
    return EXIT_OK


# --- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xtalkgst", description="Crosstalk gate-set tomography toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file whose keys mirror the flags")
        p.set_defaults(func=func)
        return p

    p = add("design", cmd_design, "write a GST (or RB) circuit list")
    p.add_argument("--lmax", type=int)
    p.add_argument("--out")
    p.add_argument("--rb", action="store_true", help="sample simultaneous-RB circuits instead")
    p.add_argument("--rb-depths")
    p.add_argument("--rb-per-depth", type=int)
    p.add_argument("--rb-metadata", help="RB sidecar JSON to write")
    p.add_argument("--seed", type=int)

    p = add("simulate", cmd_simulate, "sample counts from a model or noise description")
    p.add_argument("--model", help="model JSON or noise description JSON")
    p.add_argument("--design")
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--eps-sweep", type=int, help="write this many ZZ datasets into --out (a directory)")
    p.add_argument("--eps-min", type=float)
    p.add_argument("--eps-max", type=float)

    p = add("fit", cmd_fit, "maximum-likelihood fits of the model families")
    p.add_argument("--dataset")
    p.add_argument("--family", action="append", choices=models.FAMILIES)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--starts", type=int)
    p.add_argument("--bootstrap", type=int, help="parametric bootstrap replicates (0 disables)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("select", cmd_select, "compare fitted families and select one")
    p.add_argument("--dataset")
    p.add_argument("--fits")
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma-threshold", type=float)
    p.add_argument("--no-diamond", action="store_true", default=None)
    p.add_argument("--out")

    p = add("wildcard", cmd_wildcard, "wildcard error budgets of fitted families")
    p.add_argument("--dataset")
    p.add_argument("--fits")
    p.add_argument("--family", action="append", choices=models.FAMILIES)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out")

    p = add("rb", cmd_rb, "simultaneous-RB decay analysis")
    p.add_argument("--dataset")
    p.add_argument("--rb-metadata")
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("report", cmd_report, "merge result files into report.json and SVG figures")
    p.add_argument("fragments", nargs="*")
    p.add_argument("--out", help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        ns = _resolve(args)
        return ns.func(ns)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"xtalkgst: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"xtalkgst: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"xtalkgst: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
