"""Serialization: binary fields and ensembles, CSV/JSON reports, SVG plots.

Field file layout (little endian)::

    b"VNSF"  u32 version=1  u32 dim  u32 kind  u32 ncomp
    u32 cells[dim]  f64 spacing[dim]
    ncomp arrays of f64, row-major, shape = cells (kind 0, 2) or the MAC
    face shape of each component (kind 1)

``kind`` is 0 for a scalar, 1 for a MAC vector, 2 for a collocated vector.

Ensemble file layout::

    b"VNSE"  u32 version=1  u32 dim  u64 count
    f64 absorbed_mass  f64 truncated_mass  f64 initial_mass
    count packed records: f64 x[dim], f64 v[dim], f64 weight, i1 status
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import struct
from pathlib import Path

import numpy as np

from .grid import Grid, ScalarField, StripDomain, VectorField, cell_average
from .kinetic import ParticleEnsemble

_FIELD_MAGIC = b"VNSF"
_ENS_MAGIC = b"VNSE"


def field_bytes(f: ScalarField | VectorField) -> bytes:
    g = f.grid
    if isinstance(f, ScalarField):
        kind, arrays = 0, [f.values]
    else:
        kind, arrays = (1 if f.staggering == "mac" else 2), list(f.components)
    buf = _io.BytesIO()
    buf.write(_FIELD_MAGIC)
    buf.write(struct.pack("<4I", 1, g.dim, kind, len(arrays)))
    buf.write(struct.pack(f"<{g.dim}I", *g.cells))
    buf.write(struct.pack(f"<{g.dim}d", *g.spacing))
    for a in arrays:
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return buf.getvalue()


def write_field(path, f) -> None:
    Path(path).write_bytes(field_bytes(f))


def read_field(path, periodic_z: bool = False):
    data = Path(path).read_bytes()
    if data[:4] != _FIELD_MAGIC:
        raise ValueError(f"{path}: not a field file")
    _, dim, kind, ncomp = struct.unpack_from("<4I", data, 4)
    off = 20
    cells = struct.unpack_from(f"<{dim}I", data, off)
    off += 4 * dim
    spacing = struct.unpack_from(f"<{dim}d", data, off)
    off += 8 * dim
    ext = [c * h for c, h in zip(cells, spacing)]
    g = Grid(StripDomain(dim, tuple(ext[:-1]), ext[-1], periodic_z), cells)
    arrays = []
    for a in range(ncomp):
        shape = g.face_shape(a) if kind == 1 else g.cells
        n = int(np.prod(shape))
        arrays.append(np.frombuffer(data, "<f8", n, off).reshape(shape).copy())
        off += 8 * n
    if kind == 0:
        return ScalarField(g, arrays[0])
    return VectorField(g, tuple(arrays), "mac" if kind == 1 else "cell")


def field_csv(f, path) -> None:
    """Cell-centred values, one row per cell: coordinates then components."""
    g = f.grid
    if isinstance(f, VectorField):
        comps = cell_average(f).components
    else:
        comps = [f.values]
    mesh = g.mesh()
    names = ["x", "y", "z"][-g.dim:] if g.dim == 3 else ["x", "z"]
    cols = [m.ravel() for m in mesh] + [c.ravel() for c in comps]
    header = names + ([f"u{a}" for a in range(len(comps))] if len(comps) > 1 else ["value"])
    _write_rows(path, header, zip(*cols))


def _ens_dtype(dim):
    return np.dtype([("x", "<f8", (dim,)), ("v", "<f8", (dim,)), ("w", "<f8"), ("status", "i1")])


def ensemble_bytes(ens: ParticleEnsemble) -> bytes:
    dim = ens.dim
    rec = np.zeros(len(ens), dtype=_ens_dtype(dim))
    rec["x"], rec["v"], rec["w"], rec["status"] = ens.positions, ens.velocities, ens.weights, ens.status
    head = _ENS_MAGIC + struct.pack("<IIQ3d", 1, dim, len(ens), ens.absorbed_mass,
                                    ens.truncated_mass, ens.initial_mass)
    return head + rec.tobytes()


def write_ensemble(path, ens) -> None:
    Path(path).write_bytes(ensemble_bytes(ens))


def read_ensemble(path) -> ParticleEnsemble:
    data = Path(path).read_bytes()
    if data[:4] != _ENS_MAGIC:
        raise ValueError(f"{path}: not an ensemble file")
    _, dim, n, ab, tr, m0 = struct.unpack_from("<IIQ3d", data, 4)
    off = 4 + struct.calcsize("<IIQ3d")
    rec = np.frombuffer(data, _ens_dtype(dim), n, off)
    return ParticleEnsemble(rec["x"].copy(), rec["v"].copy(), rec["w"].copy(),
                            rec["status"].copy(), ab, tr, m0)


def ensemble_csv(ens, path) -> None:
    d = ens.dim
    header = [f"x{a}" for a in range(d)] + [f"v{a}" for a in range(d)] + ["weight", "status"]
    rows = (list(ens.positions[i]) + list(ens.velocities[i]) + [ens.weights[i], int(ens.status[i])]
            for i in range(len(ens)))
    _write_rows(path, header, rows)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, np.floating):
        return repr(float(v))
    return str(v)


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_metrics(path, metrics) -> None:
    """Long format: ``t, metric, value``."""
    _write_rows(path, ["t", "metric", "value"], metrics)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(run_dir, config: dict, summary: dict, status: str = "complete") -> dict:
    """Hash every file in ``run_dir`` (except the manifest) into manifest.json."""
    run_dir = Path(run_dir)
    files = {}
    for p in sorted(run_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(run_dir).as_posix()] = sha256_file(p)
    manifest = {"status": status, "config": config, "summary": summary, "files": files}
    write_json(run_dir / "manifest.json", manifest)
    return manifest


# --- SVG -----------------------------------------------------------------------

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _ticks(lo, hi):
    return [10.0 ** k for k in range(math.floor(lo), math.ceil(hi) + 1)]


def svg_plot(path, series, *, title="", xlabel="", ylabel="", logx=True, logy=True,
             annotation=None, width=520, height=380) -> None:
    """Line/marker plot written as plain SVG, with a sidecar CSV of the data.

    ``series`` is a list of ``(label, x, y)``.
    """
    path = Path(path)
    rows = [(lab, float(a), float(b)) for lab, xs, ys in series for a, b in zip(xs, ys)]
    _write_rows(path.with_suffix(".csv"), ["series", "x", "y"], rows)
    fx = (lambda v: math.log10(v)) if logx else float
    fy = (lambda v: math.log10(v)) if logy else float
    pts = [(fx(x), fy(y)) for _, x, y in rows if (x > 0 or not logx) and (y > 0 or not logy)]
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    padx, pady = 0.05 * (x1 - x0), 0.08 * (y1 - y0)
    x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady
    L, R, T, B = 70, 20, 40, 50
    W, H = width - L - R, height - T - B

    def X(v):
        return L + (v - x0) / (x1 - x0) * W

    def Y(v):
        return T + H - (v - y0) / (y1 - y0) * H

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect x="{L}" y="{T}" width="{W}" height="{H}" fill="none" stroke="black"/>',
           f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{title}</text>',
           f'<text x="{L + W / 2:.1f}" y="{height - 10}" text-anchor="middle">{xlabel}</text>',
           f'<text x="16" y="{T + H / 2:.1f}" text-anchor="middle" '
           f'transform="rotate(-90 16 {T + H / 2:.1f})">{ylabel}</text>']
    for axis, lo, hi, log in (("x", x0, x1, logx), ("y", y0, y1, logy)):
        ticks = [math.log10(t) for t in _ticks(lo, hi)] if log else list(np.linspace(lo, hi, 5))
        for t in ticks:
            if not lo <= t <= hi:
                continue
            label = f"1e{int(round(t))}" if log else f"{t:.3g}"
            if axis == "x":
                out.append(f'<line x1="{X(t):.1f}" y1="{T + H}" x2="{X(t):.1f}" y2="{T + H + 5}" stroke="black"/>')
                out.append(f'<text x="{X(t):.1f}" y="{T + H + 18}" text-anchor="middle">{label}</text>')
            else:
                out.append(f'<line x1="{L - 5}" y1="{Y(t):.1f}" x2="{L}" y2="{Y(t):.1f}" stroke="black"/>')
                out.append(f'<text x="{L - 8}" y="{Y(t) + 4:.1f}" text-anchor="end">{label}</text>')
    for k, (lab, xs, ys) in enumerate(series):
        c = _COLORS[k % len(_COLORS)]
        p = [(X(fx(a)), Y(fy(b))) for a, b in zip(xs, ys)
             if (a > 0 or not logx) and (b > 0 or not logy)]
        if p:
            d = " ".join(f"{a:.2f},{b:.2f}" for a, b in p)
            out.append(f'<polyline points="{d}" fill="none" stroke="{c}" stroke-width="1.5"/>')
            if len(p) <= 40:
                out.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{c}"/>' for a, b in p)
        out.append(f'<text x="{L + 10}" y="{T + 16 + 15 * k}" fill="{c}">{lab}</text>')
    if annotation:
        out.append(f'<text x="{L + W - 10}" y="{T + H - 12}" text-anchor="end">{annotation}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")
