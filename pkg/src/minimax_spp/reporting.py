"""Configuration loading and report files (CSV, JSON, SVG).

CSV files are UTF-8 with LF line endings and a header row. Floats are
written with ``repr`` (shortest round-trip form), so identical inputs give
identical bytes. Every file is written to a temporary file in the target
directory and then renamed into place.
"""
import copy
import json
import math
import os
import tempfile

import numpy as np

__all__ = [
    "SCHEMA",
    "ConfigError",
    "DEFAULTS",
    "load_config",
    "apply_overrides",
    "atomic_write_text",
    "format_value",
    "csv_text",
    "write_csv",
    "write_json",
    "svg_line_chart",
    "write_svg",
]

SCHEMA = "minimax-spp/1"


class ConfigError(ValueError):
    pass


# every accepted key with its default; anything else is rejected
DEFAULTS = {
    "regress": {
        "n": 40, "m_dim": 40, "p": 20, "N": 1000, "sigma": 0.01, "instance_seed": 0,
        "problem": None, "alphas": [0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0], "m_inners": [10],
        "batches": [10], "trials": 7, "S": 30, "mode": "without", "eps_floor": 1e-14, "seed": 0,
        "timing": False,
    },
    "netflow": {
        "n_nodes": 10, "cells": [[0.3, 0.001], [0.3, 0.01], [0.7, 0.001], [0.7, 0.01]],
        "budget_fracs": [0.25, 0.5, 1.0], "trials": 15, "M": 2000,
        "strategies": ["SNmMSPP", "MGD", "Random", "MaxCapacity", "Greedy"],
        "S": 200, "m_inner": 5, "alpha": 0.002, "batch": 10, "eps_sub": 1e-10,
        "mgd_T": 100, "mgd_K": 5, "mgd_step_out": 0.5, "mgd_step_in": 0.5, "seed": 0,
    },
    "rate": {
        "instance": "quadratic", "n": 20, "m_dim": 20, "q": 5, "N": 50, "instance_seed": 0,
        "problem": None, "trials": 20, "S": 30, "m_inner": 5, "batch": 10, "alpha_factors": [0.9],
        "delta0": 1.0, "delta_ratio": 0.5, "eps_floor": 1e-14, "mode": "without", "gate": 0.1, "seed": 0,
    },
    "proptest": {
        "trials": 1000, "suites": None, "replay": None, "seed": 0,
    },
}


def _check_types(command, cfg):
    base = DEFAULTS[command]
    for key, val in cfg.items():
        ref = base[key]
        if ref is None or val is None:
            continue
        if isinstance(ref, bool):
            ok = isinstance(val, bool)
        elif isinstance(ref, int):
            ok = isinstance(val, int) and not isinstance(val, bool)
        elif isinstance(ref, float):
            ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        elif isinstance(ref, str):
            ok = isinstance(val, str)
        else:
            ok = isinstance(val, list)
        if not ok:
            raise ConfigError(f"{command}: key {key!r} expects {type(ref).__name__}, got {type(val).__name__}")


def load_config(command, path=None):
    """Defaults for ``command`` updated with the JSON document at ``path``.

    The document must carry ``"schema": "minimax-spp/1"``; an optional
    ``"command"`` entry must match. Unknown keys raise :class:`ConfigError`.
    """
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command {command!r}")
    cfg = copy.deepcopy(DEFAULTS[command])
    if path is None:
        return cfg
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if doc.get("schema") != SCHEMA:
        raise ConfigError(f"config schema must be {SCHEMA!r}, got {doc.get('schema')!r}")
    if "command" in doc and doc["command"] != command:
        raise ConfigError(f"config is for {doc['command']!r}, not {command!r}")
    body = {k: v for k, v in doc.items() if k not in ("schema", "command")}
    unknown = sorted(set(body) - set(cfg))
    if unknown:
        raise ConfigError(f"{command}: unknown config keys {unknown}")
    _check_types(command, body)
    cfg.update(body)
    return cfg


def apply_overrides(command, cfg, pairs):
    """Apply ``key=value`` strings; values are parsed as JSON, else kept as strings."""
    cfg = dict(cfg)
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS[command]:
            raise ConfigError(f"{command}: unknown config key {key!r}")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        _check_types(command, {key: val})
        cfg[key] = val
    return cfg


def atomic_write_text(path, text):
    """Write ``text`` (UTF-8, no newline translation) to ``path`` via temp file + rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    s = str(v)
    if any(ch in s for ch in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def csv_text(columns, rows):
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(format_value(r[c]) for c in columns))
    return "\n".join(lines) + "\n"


def write_csv(path, columns, rows):
    atomic_write_text(path, csv_text(columns, rows))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no nan/inf; encode them as strings
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def write_json(path, obj):
    atomic_write_text(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
            "#bcbd22", "#17becf")


def _nice(v):
    return f"{v:.3g}"


def svg_line_chart(series, title="", xlabel="", ylabel="", logy=False, width=640, height=420):
    """Static SVG line chart.

    ``series`` is a list of ``(label, xs, ys)``. Non-finite points (and
    non-positive ones on a log axis) break the line.
    """
    ml, mr, mt, mb = 70, 160, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def ty(v):
        return math.log10(v) if logy else v

    xs_all, ys_all = [], []
    for _, xs, ys in series:
        for x, y in zip(xs, ys):
            if math.isfinite(x) and math.isfinite(y) and (y > 0 or not logy):
                xs_all.append(float(x))
                ys_all.append(ty(float(y)))
    if xs_all:
        x0, x1 = min(xs_all), max(xs_all)
        y0, y1 = min(ys_all), max(ys_all)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        out.append(f'<line x1="{px(fx):.2f}" y1="{mt + ph}" x2="{px(fx):.2f}" y2="{mt + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px(fx):.2f}" y="{mt + ph + 16}" text-anchor="middle">{_nice(fx)}</text>')
        lab = _nice(10 ** fy) if logy else _nice(fy)
        out.append(f'<line x1="{ml - 4}" y1="{py(fy):.2f}" x2="{ml}" y2="{py(fy):.2f}" stroke="black"/>')
        out.append(f'<text x="{ml - 6}" y="{py(fy) + 4:.2f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{mt - 14}" text-anchor="middle" font-size="13">{_esc(title)}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for k, (label, xs, ys) in enumerate(series):
        color = _PALETTE[k % len(_PALETTE)]
        seg = []
        for x, y in list(zip(xs, ys)) + [(float("nan"), float("nan"))]:
            ok = math.isfinite(x) and math.isfinite(y) and (y > 0 or not logy)
            if ok:
                seg.append(f"{px(float(x)):.2f},{py(ty(float(y))):.2f}")
                continue
            if len(seg) == 1:
                cx, cy = seg[0].split(",")
                out.append(f'<circle cx="{cx}" cy="{cy}" r="2" fill="{color}"/>')
            elif seg:
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(seg)}"/>')
            seg = []
        ly = mt + 14 + 16 * k
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 34}" y="{ly}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_svg(path, series, **kw):
    atomic_write_text(path, svg_line_chart(series, **kw))
