"""Report assembly: gate error summaries, JSON reports and static SVG figures.

Reports are written with sorted keys and fixed float formatting so that
identical inputs give byte-identical files.  Every numeric result is stored
as ``{"value": x, "halfwidth": h}`` with ``h`` possibly null.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from importlib import metadata as importlib_metadata
from xml.sax.saxutils import escape

import numpy as np

from . import errorgen
from .circuits import GATES, LAYERS
from .models import GENERAL, GateSetModel

REPORT_VERSION = 1

__all__ = [
    "REPORT_VERSION",
    "default_quantities",
    "gate_error_reports",
    "attach_halfwidths",
    "with_halfwidths",
    "build_report",
    "file_sha256",
    "write_json",
    "write_text",
    "decay_curve_svg",
    "hamiltonian_arrows_svg",
    "comparison_table_svg",
    "write_figures",
]


def tool_version() -> str:
    try:
        return importlib_metadata.version("artifact")
    except importlib_metadata.PackageNotFoundError:
        return "unknown"


# --- quantities -----------------------------------------------------------------

def _local_key(q, gate, ctx, axis):
    return f"q{q}.{gate}.{ctx}.h{axis}"


def default_quantities(m: GateSetModel) -> dict:
    """Scalar summaries that the bootstrap tracks for a fitted model.

    Factored families: every single-qubit Hamiltonian coefficient per gate and
    context (radians).  General family: the idle-layer ``ZZ`` strength.
    """
    if m.family == GENERAL:
        return {"zz": errorgen.zz_coefficient(m.layers[LAYERS.index(("Gi", "Gi"))])}
    out = {}
    for q in range(2):
        for gate in GATES:
            for ctx in GATES:
                ham, _, _ = errorgen.decompose_gate(m.local_gate(q, gate, ctx), gate)
                for axis in ("X", "Y", "Z"):
                    out[_local_key(q, gate, ctx, axis)] = float(ham[axis])
    return out


def gate_error_reports(m: GateSetModel) -> list:
    """One :class:`GateErrorReport` per qubit, gate and spectator context.

    For the general family each two-qubit layer gets one report with the 15
    two-qubit Pauli labels.
    """
    reports = []
    if m.family == GENERAL:
        for i, lay in enumerate(LAYERS):
            ham, sto, res = errorgen.decompose_gate(m.layers[i], lay)
            reports.append(errorgen.GateErrorReport(
                f"{lay[0]}:{lay[1]}", "layer", ham, sto, res,
                gauge_note="single entries are gauge dependent; idle-layer ZZ is gauge free to first order",
            ))
        return reports
    for q in range(2):
        for gate in GATES:
            for ctx in GATES:
                ham, sto, res = errorgen.decompose_gate(m.local_gate(q, gate, ctx), gate)
                note = ("context differences are gauge free; "
                        + ("the rotation-axis entry is gauge free" if gate != "Gi" else "all entries carry gauge offsets"))
                reports.append(errorgen.GateErrorReport(f"q{q}:{gate}", ctx, ham, sto, res, gauge_note=note))
    return reports


def attach_halfwidths(reports: list, halfwidths: dict) -> list:
    """Copy bootstrap half-widths from :func:`default_quantities` keys onto reports."""
    for rep in reports:
        if rep.context == "layer":
            continue
        q, gate = rep.gate.split(":")
        keys = [f"{q}.{gate}.{rep.context}.h{a}" for a in rep.hamiltonian.labels]
        if all(k in halfwidths for k in keys):
            rep.hamiltonian_halfwidth = tuple(halfwidths[k] for k in keys)
    return reports


# --- JSON -------------------------------------------------------------------------

def _is_vh(obj) -> bool:
    return isinstance(obj, dict) and set(obj) == {"value", "halfwidth"}


def with_halfwidths(obj):
    """Wrap every bare number in ``{"value": x, "halfwidth": None}``."""
    if _is_vh(obj):
        return {"value": _plain(obj["value"]), "halfwidth": _plain(obj["halfwidth"])}
    if isinstance(obj, dict):
        return {str(k): with_halfwidths(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [with_halfwidths(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return _plain(obj)
    if isinstance(obj, (int, float, np.integer, np.floating)):
        return {"value": _plain(obj), "halfwidth": None}
    if isinstance(obj, np.ndarray):
        return with_halfwidths(obj.tolist())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _plain(x):
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if not np.isfinite(x):
            return None
        return float(f"{x:.12g}")
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    return x


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def build_report(config: dict, sections: dict, inputs=()) -> dict:
    """Assemble the report document.

    ``sections`` holds result blocks (``comparison``, ``gates``, ``rb``, ...)
    whose numbers are wrapped with half-widths; ``config`` and provenance are
    stored verbatim.
    """
    return {
        "version": REPORT_VERSION,
        "config": _plain(config),
        "results": with_halfwidths(sections),
        "provenance": {
            "tool": "xtalkgst",
            "tool_version": tool_version(),
            "inputs": {os.path.basename(str(p)): file_sha256(p) for p in sorted(inputs, key=str)},
        },
    }


def write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, doc) -> None:
    write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --- SVG ------------------------------------------------------------------------------

_W, _H = 480, 320
_MARGIN = 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _num(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".") if abs(x) < 1e6 else f"{x:.3e}"


def _svg(body: list, width: int = _W, height: int = _H) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _text(x, y, s, anchor="middle", size=None) -> str:
    extra = f' font-size="{size}"' if size else ""
    return f'<text x="{_num(x)}" y="{_num(y)}" text-anchor="{anchor}"{extra}>{escape(str(s))}</text>'


def decay_curve_svg(cell: dict, title: str | None = None) -> str:
    """Success versus depth with per-depth ranges and the fitted decay.

    ``cell`` is one entry of an RB report (plain numbers or value/half-width
    pairs).  Depths are placed on a log2 axis; each depth shows the range
    and quartiles of circuit success probabilities.
    """
    val = _unwrap(cell)
    succ = {int(d): np.asarray(v, dtype=float) for d, v in val["successes"].items()}
    depths = sorted(succ)
    xs = np.log2(np.maximum(depths, 1))
    x0, x1 = float(xs.min()), float(max(xs.max(), xs.min() + 1))
    y0, y1 = 0.4, 1.0

    def px(x):
        return _MARGIN + (x - x0) / (x1 - x0) * (_W - 2 * _MARGIN)

    def py(y):
        return _H - _MARGIN - (y - y0) / (y1 - y0) * (_H - 2 * _MARGIN)

    body = [
        f'<line x1="{_MARGIN}" y1="{_H - _MARGIN}" x2="{_W - _MARGIN}" y2="{_H - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{_H - _MARGIN}" stroke="black"/>',
        _text(_W / 2, _H - 12, "depth (log2 scale)"),
        _text(14, _H / 2, "success", anchor="middle"),
        _text(_W / 2, 20, title or f"qubit {val['qubit']}, spectator {val['context']}", size=13),
    ]
    for y in (0.5, 0.75, 1.0):
        body.append(_text(_MARGIN - 6, py(y) + 4, _num(y), anchor="end"))
    for d, x in zip(depths, xs):
        v = np.clip(succ[d], y0, y1)
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        cx = px(x)
        body.append(f'<line x1="{_num(cx)}" y1="{_num(py(v.min()))}" x2="{_num(cx)}" y2="{_num(py(v.max()))}" stroke="#999"/>')
        body.append(f'<rect x="{_num(cx - 5)}" y="{_num(py(q3))}" width="10" height="{_num(py(q1) - py(q3))}" '
                    f'fill="#cfe0f3" stroke="{_COLORS[0]}"/>')
        body.append(f'<circle cx="{_num(cx)}" cy="{_num(py(med))}" r="2.5" fill="{_COLORS[0]}"/>')
        body.append(_text(cx, _H - _MARGIN + 14, d))
    grid = np.linspace(x0, x1, 121)
    curve = val["A"] + val["B"] * val["p"] ** (2.0**grid)
    pts = " ".join(f"{_num(px(x))},{_num(py(float(np.clip(y, y0, y1))))}" for x, y in zip(grid, curve))
    body.append(f'<polyline points="{pts}" fill="none" stroke="{_COLORS[1]}" stroke-width="1.5"/>')
    body.append(_text(_W - _MARGIN, _MARGIN, f"r = {val['r'] * 100:.3f}%", anchor="end"))
    return _svg(body)


def hamiltonian_arrows_svg(entries: list, title: str = "") -> str:
    """Arrows from the origin to ``(h_X, h_Y)`` (mrad) per context with uncertainty ellipses.

    ``entries`` are dicts with ``context``, ``hx``, ``hy`` and optional
    ``hx_halfwidth``/``hy_halfwidth``.
    """
    span = max([1.0] + [abs(e["hx"]) + (e.get("hx_halfwidth") or 0) for e in entries]
               + [abs(e["hy"]) + (e.get("hy_halfwidth") or 0) for e in entries]) * 1.15
    size = 360
    c = size / 2
    scale = (size / 2 - 40) / span

    def pt(x, y):
        return c + x * scale, c - y * scale

    body = [
        f'<line x1="20" y1="{c}" x2="{size - 20}" y2="{c}" stroke="#bbb"/>',
        f'<line x1="{c}" y1="20" x2="{c}" y2="{size - 20}" stroke="#bbb"/>',
        _text(size - 22, c - 6, "hX (mrad)", anchor="end"),
        _text(c + 6, 30, "hY (mrad)", anchor="start"),
        _text(c, 14, title, size=13),
        _text(size - 22, c + 16, _num(span), anchor="end"),
    ]
    for i, e in enumerate(entries):
        color = _COLORS[i % len(_COLORS)]
        x, y = pt(e["hx"], e["hy"])
        body.append(f'<line x1="{_num(c)}" y1="{_num(c)}" x2="{_num(x)}" y2="{_num(y)}" stroke="{color}" stroke-width="2"/>')
        rx = (e.get("hx_halfwidth") or 0.0) * scale
        ry = (e.get("hy_halfwidth") or 0.0) * scale
        body.append(f'<ellipse cx="{_num(x)}" cy="{_num(y)}" rx="{_num(rx)}" ry="{_num(ry)}" '
                    f'fill="{color}" fill-opacity="0.2" stroke="{color}"/>')
        body.append(_text(24, size - 20 - 14 * (len(entries) - 1 - i), f"context {e['context']}", anchor="start"))
        body.append(f'<rect x="12" y="{_num(size - 28 - 14 * (len(entries) - 1 - i))}" width="8" height="8" fill="{color}"/>')
    return _svg(body, size, size)


def comparison_table_svg(comparison: dict) -> str:
    """Table of fit-quality metrics per model family."""
    comp = _unwrap(comparison)
    cols = ["model", "N_p", "lambda", "k", "N_sigma", "W", "avg diamond"]
    keys = [None, "n_params", "lambda", "k", "n_sigma", "wildcard", "avg_diamond"]
    rows = []
    for tag, row in comp["models"].items():
        cells = [tag]
        for k in keys[1:]:
            v = row.get(k)
            if isinstance(v, dict):
                v = v.get("value")
            if v is None:
                cells.append("-")
            elif isinstance(v, int):
                cells.append(str(v))
            else:
                cells.append(f"{v:.4g}")
        rows.append(cells)
    widths = [130, 50, 80, 70, 70, 70, 90]
    width = sum(widths) + 20
    height = 40 + 22 * (len(rows) + 1) + 40
    body = []
    y = 40
    x = 10
    for w, name in zip(widths, cols):
        body.append(_text(x + 4, y, name, anchor="start"))
        x += w
    body.append(f'<line x1="10" y1="{y + 6}" x2="{width - 10}" y2="{y + 6}" stroke="black"/>')
    for cells in rows:
        y += 22
        x = 10
        for w, s in zip(widths, cells):
            body.append(_text(x + 4, y, s, anchor="start"))
            x += w
    gam = ", ".join(f"gamma {k} = {v:.3g}" for k, v in comp.get("gamma", {}).items())
    body.append(_text(10, y + 24, gam, anchor="start"))
    body.append(_text(10, y + 40, f"selected: {comp.get('selected', '-')}", anchor="start"))
    return _svg(body, width, height)


def _unwrap(obj):
    if _is_vh(obj):
        return obj["value"]
    if isinstance(obj, dict):
        return {k: _unwrap(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_unwrap(v) for v in obj]
    return obj


def _arrow_entries(gates: list) -> dict:
    grouped = {}
    for rep in gates:
        if rep.get("context") == "layer":
            continue
        ham = rep["hamiltonian_mrad"]
        grouped.setdefault(rep["gate"], []).append({
            "context": rep["context"],
            "hx": _unwrap(ham["X"]["value"]),
            "hy": _unwrap(ham["Y"]["value"]),
            "hx_halfwidth": _unwrap(ham["X"]["halfwidth"]),
            "hy_halfwidth": _unwrap(ham["Y"]["halfwidth"]),
        })
    return grouped


def write_figures(report: dict, outdir) -> list:
    """Emit every figure the report supports; returns the written file names in order."""
    results = report.get("results", {})
    written = []
    comparison = results.get("comparison")
    if comparison:
        write_text(os.path.join(outdir, "comparison.svg"), comparison_table_svg(comparison))
        written.append("comparison.svg")
    for fam, gates in sorted((results.get("gates") or {}).items()):
        for gate, entries in sorted(_arrow_entries(gates).items()):
            name = f"hamiltonian_{fam}_{gate.replace(':', '_')}.svg"
            write_text(os.path.join(outdir, name), hamiltonian_arrows_svg(entries, f"{fam} {gate}"))
            written.append(name)
    rb = results.get("rb")
    if rb:
        for cell in rb["cells"]:
            c = _unwrap(cell)
            name = f"rb_q{c['qubit']}_{c['context']}.svg"
            write_text(os.path.join(outdir, name), decay_curve_svg(cell))
            written.append(name)
    return written
