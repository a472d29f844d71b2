"""Serialized outputs: JSON results, CSV tables, histogram SVG/CSV pairs."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

SCHEMA_VERSION = "1.0"
FLOAT_FORMAT = "%.17g"
PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#8172b3", "#937860")


def fmt_float(x: float) -> str:
    return FLOAT_FORMAT % x


# ---------------------------------------------------------------- JSON


def _encode(obj, indent: int, level: int, out: list[str]) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        out.append({None: "null", True: "true", False: "false"}[None if obj is None else bool(obj)])
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no nan/inf
        out.append(fmt_float(x) if math.isfinite(x) else "null")
    elif isinstance(obj, str):
        out.append(_json_str(obj))
    elif isinstance(obj, np.ndarray):
        _encode(obj.tolist(), indent, level, out)
    elif isinstance(obj, Mapping):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}{_json_str(str(k))}: ")
            _encode(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        if all(not isinstance(v, (Mapping, list, tuple, np.ndarray)) for v in obj):
            parts: list[str] = []
            for v in obj:
                _encode(v, indent, level + 1, parts)
                parts.append(", ")
            out.append("[" + "".join(parts[:-1]) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _encode(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def _json_str(s: str) -> str:
    return json.dumps(s)


def dumps(obj, indent: int = 2) -> str:
    """JSON text with floats at 17 significant digits and insertion-ordered keys."""
    out: list[str] = []
    _encode(obj, indent, 0, out)
    return "".join(out) + "\n"


def emit_results(report: Mapping, path: str | Path) -> Path:
    """Write ``report`` as JSON with ``schema_version`` as the first key."""
    path = Path(path)
    body = {"schema_version": SCHEMA_VERSION}
    body.update((k, v) for k, v in report.items() if k != "schema_version")
    try:
        path.write_text(dumps(body))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def write_rows_csv(rows: Sequence[Mapping], path: str | Path, columns: Sequence[str] | None = None) -> Path:
    path = Path(path)
    columns = list(columns or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r[c]) for c in columns])
    return path


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return fmt_float(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


# ---------------------------------------------------------------- histograms


@dataclass
class HistogramTable:
    bin_edges: np.ndarray
    counts: dict[str, np.ndarray]
    markers: dict[str, float] = field(default_factory=dict)
    title: str = ""

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=np.float64)
        self.counts = {k: np.asarray(v, dtype=np.int64) for k, v in self.counts.items()}
        nb = len(self.bin_edges) - 1
        if nb < 1:
            raise ValueError("need at least two bin edges")
        for k, v in self.counts.items():
            if v.shape != (nb,):
                raise ValueError(f"series {k!r} has {v.size} counts for {nb} bins")

    @property
    def labels(self) -> list[str]:
        return list(self.counts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HistogramTable):
            return NotImplemented
        return (
            np.array_equal(self.bin_edges, other.bin_edges)
            and self.labels == other.labels
            and all(np.array_equal(self.counts[k], other.counts[k]) for k in self.labels)
            and self.markers == other.markers
            and self.title == other.title
        )


def histogram_table(
    series: Mapping[str, Iterable[float]],
    bins: int = 30,
    x_range: tuple[float, float] | None = None,
    markers: Mapping[str, float] | None = None,
    title: str = "",
) -> HistogramTable:
    """Bin every series on shared edges.

    Values outside ``x_range`` are clipped into the end bins, so each
    series' counts add up to its number of values.
    """
    data = {k: np.asarray(list(v), dtype=np.float64) for k, v in series.items()}
    if not data:
        raise ValueError("no series given")
    if x_range is None:
        allv = np.concatenate([v for v in data.values()] + [np.zeros(1)])
        hi = float(allv.max())
        x_range = (0.0, hi if hi > 0 else 1.0)
    lo, hi = map(float, x_range)
    if not hi > lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    counts = {k: np.histogram(np.clip(v, lo, hi), bins=edges)[0] for k, v in data.items()}
    return HistogramTable(edges, counts, dict(markers or {}), title)


def write_histogram_csv(table: HistogramTable, path: str | Path) -> Path:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if table.title:
        w.writerow(["#title", table.title])
    for k, v in table.markers.items():
        w.writerow(["#marker", k, fmt_float(v)])
    w.writerow(["bin_left", "bin_right", *table.labels])
    e = table.bin_edges
    for b in range(len(e) - 1):
        w.writerow([fmt_float(e[b]), fmt_float(e[b + 1]), *(str(table.counts[k][b]) for k in table.labels)])
    path.write_text(buf.getvalue())
    return path


def read_histogram_csv(path: str | Path) -> HistogramTable:
    title, markers, header, rows = "", {}, None, []
    with Path(path).open(newline="") as fh:
        for rec in csv.reader(fh):
            if not rec:
                continue
            if rec[0] == "#title":
                title = rec[1]
            elif rec[0] == "#marker":
                markers[rec[1]] = float(rec[2])
            elif header is None:
                header = rec
            else:
                rows.append(rec)
    if header is None or not rows:
        raise ValueError(f"{path}: not a histogram table")
    left = [float(r[0]) for r in rows]
    edges = np.array(left + [float(rows[-1][1])])
    counts = {lab: np.array([int(r[2 + i]) for r in rows]) for i, lab in enumerate(header[2:])}
    return HistogramTable(edges, counts, markers, title)


def render_svg(table: HistogramTable, width: int = 640, height: int = 400) -> str:
    if not table.counts:
        raise ValueError("histogram table has no series")
    ml, mr, mt, mb = 60, 20, 30, 45
    pw, ph = width - ml - mr, height - mt - mb
    e = table.bin_edges
    x0, x1 = 0.0, float(e[-1])
    if x1 <= x0:
        x0, x1 = float(e[0]), float(e[-1])
    ymax = max(1, max(int(c.max()) for c in table.counts.values()))

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(c):
        return mt + ph - c / ymax * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if table.title:
        out.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(table.title)}</text>')
    for i, lab in enumerate(table.labels):
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<g data-series="{escape(lab)}" fill="{color}" fill-opacity="0.5" stroke="{color}">')
        for b, c in enumerate(table.counts[lab]):
            xa, xb = sx(e[b]), sx(e[b + 1])
            out.append(
                f'<rect class="bar" x="{xa:.3f}" y="{sy(c):.3f}" width="{xb - xa:.3f}" '
                f'height="{ph - (sy(c) - mt):.3f}"/>'
            )
        out.append("</g>")
        ly = mt + 14 * i + 8
        out.append(f'<rect class="legend" x="{ml + pw - 110}" y="{ly - 8}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{ml + pw - 95}" y="{ly + 1}" font-size="11">{escape(lab)}</text>')
    for lab, v in table.markers.items():
        xv = sx(v)
        out.append(
            f'<line class="marker" data-label="{escape(lab)}" x1="{xv:.3f}" y1="{mt}" x2="{xv:.3f}" '
            f'y2="{mt + ph}" stroke="red" stroke-width="1.5"/>'
        )
    # axes and ticks
    out.append(f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>')
    out.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>')
    for t in np.linspace(x0, x1, 6):
        out.append(
            f'<text x="{sx(t):.3f}" y="{mt + ph + 16}" text-anchor="middle" font-size="10">{t:.3g}</text>'
        )
    for t in np.linspace(0, ymax, 5):
        out.append(f'<text x="{ml - 6}" y="{sy(t) + 3:.3f}" text-anchor="end" font-size="10">{t:.0f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_histogram(table: HistogramTable, path: str | Path) -> tuple[Path, Path]:
    """Write the SVG to ``path`` and the same table as CSV next to it."""
    if not table.counts:
        raise ValueError("histogram table has no series")
    path = Path(path)
    path.write_text(render_svg(table))
    return path, write_histogram_csv(table, path.with_suffix(".csv"))


# ---------------------------------------------------------------- size/power table


def size_power_table(rows: Sequence[Mapping]) -> str:
    """Size/power table: one panel per SNR, one line per (n, p), feasible then oracle columns per alpha."""
    snrs = sorted({r["snr"] for r in rows})
    alphas = sorted({r["alpha"] for r in rows})
    cells = sorted({(r["n"], r["p"]) for r in rows})
    rate = {(r["n"], r["p"], r["snr"], r["alpha"], r["method"]): r["rate"] for r in rows}
    head = "".join(f"  a={a:<6g}" for a in alphas)
    lines = []
    for snr in snrs:
        title = "size under the null" if snr == 0 else f"power at SNR = {snr:g}"
        lines.append(f"SNR = {snr:g} ({title})")
        lines.append(f"{'(n, p)':<14}| feasible{' ' * (len(head) - 8)} | oracle")
        lines.append(f"{'':<14}|{head} |{head}")
        for n, p in cells:
            feas = "".join(f"  {rate[(n, p, snr, a, 'feasible')]:<8.3f}" for a in alphas)
            orac = "".join(f"  {rate[(n, p, snr, a, 'oracle')]:<8.3f}" for a in alphas)
            lines.append(f"{f'({n}, {p})':<14}|{feas} |{orac}")
        lines.append("")
    return "\n".join(line.rstrip() for line in lines)
