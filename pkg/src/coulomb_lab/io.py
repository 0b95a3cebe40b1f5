"""Artifact writers: CSV tables, JSON documents, minimal SVG plots, run manifests.

CSV is the source of truth.  Every CSV starts with a ``# run: <id>`` comment
line naming the run that produced it and every JSON carries a ``run`` key;
the manifest file in the same directory maps the id to inputs and code
version.  Floats are written with ``repr`` so files round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows, run_id: str | None = None) -> Path:
    path = Path(path)
    buf = io.StringIO()
    if run_id is not None:
        buf.write(f"# run: {run_id} manifest: {MANIFEST_NAME}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path):
    """(header, float array) from a CSV written by :func:`write_csv` or by hand."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        return [], np.zeros((0, 0))
    try:
        [float(t) for t in rows[0]]
        header, body = [], rows
    except ValueError:
        header, body = [t.strip() for t in rows[0]], rows[1:]
    data = np.array([[float(t) for t in r] for r in body], dtype=float)
    if data.size == 0:
        data = data.reshape(0, len(header))
    return header, data


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, doc: dict, run_id: str | None = None) -> Path:
    path = Path(path)
    doc = dict(doc)
    if run_id is not None:
        doc["run"] = run_id
        doc["manifest"] = MANIFEST_NAME
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return path


def write_svg(path, series, title: str = "", xlabel: str = "", ylabel: str = "",
              width: int = 480, height: int = 360) -> Path:
    """Line or scatter plot; ``series`` is a list of (x, y, style) with style "line" or "dots"."""
    pad = 48
    xs = np.concatenate([np.asarray(s[0], float) for s in series]) if series else np.zeros(1)
    ys = np.concatenate([np.asarray(s[1], float) for s in series]) if series else np.zeros(1)
    ok = np.isfinite(xs) & np.isfinite(ys)
    xs, ys = (xs[ok], ys[ok]) if ok.any() else (np.zeros(1), np.zeros(1))
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
           'fill="none" stroke="#444"/>',
           f'<text x="{width / 2}" y="{pad / 2}" text-anchor="middle" font-size="13">{title}</text>',
           f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="11">{xlabel}</text>',
           f'<text x="12" y="{height / 2}" font-size="11" transform="rotate(-90 12 {height / 2})">{ylabel}</text>',
           f'<text x="{pad}" y="{height - pad + 14}" font-size="10">{x0:.3g}</text>',
           f'<text x="{width - pad}" y="{height - pad + 14}" font-size="10" text-anchor="end">{x1:.3g}</text>',
           f'<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{y0:.3g}</text>',
           f'<text x="{pad - 4}" y="{pad + 8}" font-size="10" text-anchor="end">{y1:.3g}</text>']
    for k, (x, y, style) in enumerate(series):
        x, y = np.asarray(x, float), np.asarray(y, float)
        keep = np.isfinite(x) & np.isfinite(y)
        c = colors[k % len(colors)]
        if style == "dots":
            out += [f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="1.5" fill="{c}"/>' for a, b in zip(x[keep], y[keep])]
        else:
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[keep], y[keep]))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path


def first_divergence(expected: Path, actual: Path):
    """None if the files are byte-identical, else a dict locating the first differing cell."""
    a, b = Path(expected).read_bytes(), Path(actual).read_bytes()
    if a == b:
        return None
    la, lb = a.decode().splitlines(), b.decode().splitlines()
    # data rows first: the run-id comment differs whenever the config does
    m = max(len(la), len(lb))
    comment = [i < len(la) and la[i].startswith("#") and i < len(lb) and lb[i].startswith("#") for i in range(m)]
    order = [i for i in range(m) if not comment[i]] + [i for i in range(m) if comment[i]]
    for i in order:
        ra = la[i] if i < len(la) else None
        rb = lb[i] if i < len(lb) else None
        if ra == rb:
            continue
        ca = next(csv.reader([ra])) if ra is not None else []
        cb = next(csv.reader([rb])) if rb is not None else []
        for j in range(max(len(ca), len(cb))):
            va = ca[j] if j < len(ca) else None
            vb = cb[j] if j < len(cb) else None
            if va != vb:
                return {"file": Path(expected).name, "line": i + 1, "column": j + 1, "expected": va, "actual": vb}
        return {"file": Path(expected).name, "line": i + 1, "column": None, "expected": ra, "actual": rb}
    return {"file": Path(expected).name, "line": None, "column": None, "expected": "<eof>", "actual": "<eof>"}


__all__ = ["MANIFEST_NAME", "sha256_file", "sha256_text", "write_csv", "read_csv", "write_json", "write_svg",
           "first_divergence"]
