"""Static report emission: a single self-contained HTML page with SVG scene
panels, metric charts, and the accuracy/regression tables."""

from __future__ import annotations

import html
import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import metrics as mx
from . import scene as sc

ELEMENT_COLORS: dict[str, str] = {
    "road": "#6b6b6b",
    "sky": "#9fd3f2",
    "trees": "#3f8f4f",
    "buildings": "#b08a5a",
    "poles": "#4a4a58",
    "signage": "#d8b13c",
    "pedestrians": "#d06aa8",
    "vehicles": "#c4463c",
    "bicycles": "#7455c9",
    "pavement": "#c9c3b4",
    "fences": "#8a6f4d",
    "road markings": "#f3f0e4",
}

_CELL = 6  # svg pixels per raster cell


def svg_raster(scene: sc.Scene) -> str:
    """Render a label raster as run-length rects; deterministic text output."""
    grid = scene.grid
    parts = [f'<svg class="raster" width="{scene.width * _CELL}" '
             f'height="{scene.height * _CELL}" '
             f'viewBox="0 0 {scene.width * _CELL} {scene.height * _CELL}" '
             f'xmlns="http://www.w3.org/2000/svg">']
    for r in range(scene.height):
        row = grid[r]
        c = 0
        while c < scene.width:
            c1 = c
            while c1 < scene.width and row[c1] == row[c]:
                c1 += 1
            color = ELEMENT_COLORS[sc.ELEMENT_NAMES[int(row[c])]]
            parts.append(f'<rect x="{c * _CELL}" y="{r * _CELL}" '
                         f'width="{(c1 - c) * _CELL}" height="{_CELL}" '
                         f'fill="{color}"/>')
            c = c1
    parts.append("</svg>")
    return "".join(parts)


def svg_grouped_bars(series: Mapping[str, Sequence[float]], labels: Sequence[str],
                     colors: Sequence[str], width: int = 460, height: int = 200,
                     ) -> str:
    """Grouped bar chart for a few named series over shared category labels."""
    names = list(series)
    n_groups = len(labels)
    n_series = max(1, len(names))
    top = max((max(v) if len(v) else 0.0 for v in series.values()), default=0.0)
    top = top if top > 0 else 1.0
    margin, base = 6, height - 26
    group_w = (width - 2 * margin) / max(1, n_groups)
    bar_w = group_w / (n_series + 1)
    parts = [f'<svg class="chart" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" xmlns="http://www.w3.org/2000/svg">']
    for gi, label in enumerate(labels):
        x0 = margin + gi * group_w
        for si, name in enumerate(names):
            value = series[name][gi]
            h = 0.0 if top == 0 else (value / top) * (base - 24)
            x = x0 + bar_w * (si + 0.5)
            parts.append(f'<rect x="{x:.1f}" y="{base - h:.1f}" '
                         f'width="{bar_w:.1f}" height="{h:.1f}" fill="{colors[si % len(colors)]}">'
                         f'<title>{html.escape(name)}: {value:g}</title></rect>')
        parts.append(f'<text x="{x0 + group_w / 2:.1f}" y="{height - 10}" '
                     f'text-anchor="middle" font-size="10">{html.escape(str(label))}</text>')
    for si, name in enumerate(names):
        parts.append(f'<rect x="{margin + si * 130}" y="4" width="10" height="10" '
                     f'fill="{colors[si % len(colors)]}"/>'
                     f'<text x="{margin + si * 130 + 14}" y="13" font-size="10">'
                     f'{html.escape(name)}</text>')
    parts.append("</svg>")
    return "".join(parts)


def _gap(missing: str) -> str:
    return f'<p class="gap">Missing input: {html.escape(missing)} (stage not run?)</p>'


def _read_csv_rows(path: Path) -> list[list[str]]:
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        rows.append(line.split(","))
    return rows


def _table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    out = ["<table><thead><tr>"]
    out += [f"<th>{html.escape(h)}</th>" for h in headers]
    out.append("</tr></thead><tbody>")
    for row in rows:
        out.append("<tr>" + "".join(f"<td>{html.escape(str(v))}</td>" for v in row) + "</tr>")
    out.append("</tbody></table>")
    return "".join(out)


def _fmt(x: float, digits: int = 3) -> str:
    return f"{x:.{digits}f}"


_STYLE = """
body { font-family: sans-serif; margin: 24px; color: #222; max-width: 1100px; }
h1 { font-size: 22px; } h2 { font-size: 17px; margin-top: 28px; }
table { border-collapse: collapse; margin: 8px 0; }
td, th { border: 1px solid #bbb; padding: 3px 8px; font-size: 12px; text-align: right; }
th:first-child, td:first-child { text-align: left; }
.gap { color: #a33; font-style: italic; }
.panel { display: inline-block; vertical-align: top; margin: 6px 14px 6px 0; }
.panel figcaption { font-size: 11px; text-align: center; margin-top: 2px; }
.legend-entry { display: inline-block; margin-right: 12px; font-size: 12px; }
.swatch { display: inline-block; width: 11px; height: 11px; margin-right: 3px; border: 1px solid #888; }
.meta { color: #666; font-size: 12px; }
"""


def emit_report(pipeline) -> None:
    """Build report/index.html from whatever artifacts are present.

    Missing sections are flagged inline; an entirely empty workspace is an
    error that lists the stages still to run.
    """
    ws: Path = pipeline.ws
    fingerprint: str = pipeline.fingerprint

    from .pipeline import STAGES, FingerprintMismatchError, MissingArtifactError

    stage_meta = {}
    for stage in STAGES[:-1]:
        meta_path = pipeline._meta_path(stage)
        if meta_path.exists():
            stage_meta[stage] = json.loads(meta_path.read_text(encoding="utf-8"))
    if not stage_meta:
        raise MissingArtifactError(
            "report", [f"no artifacts at all; run stages: {', '.join(STAGES[:-1])}"])
    for stage, meta in stage_meta.items():
        if meta.get("fingerprint") != fingerprint:
            raise FingerprintMismatchError(
                f"report refuses to mix fingerprints: stage {stage!r} has "
                f"{meta.get('fingerprint')}, expected {fingerprint}")

    out_dir = ws / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    body: list[str] = []
    warn_gaps: list[str] = []

    def section(title: str, content: str) -> None:
        body.append(f"<h2>{html.escape(title)}</h2>\n{content}")

    body.append("<h1>Scene beautification report</h1>")
    body.append(f'<p class="meta">config fingerprint <code>{fingerprint}</code>; '
                f'stages present: {", ".join(sorted(stage_meta))}</p>')

    # Element color legend (one entry per label).
    legend = "".join(
        f'<span class="legend-entry"><span class="swatch" '
        f'style="background:{ELEMENT_COLORS[name]}"></span>{html.escape(name)}</span>'
        for name in sc.ELEMENT_NAMES
    )
    section("Element legend", f"<div>{legend}</div>")

    # Accuracy ladder.
    table2 = ws / "models" / "table2.csv"
    if table2.exists():
        rows = _read_csv_rows(table2)[1:]
        section("Classifier accuracy by augmentation mode", _table(
            ["Augmentation", "Train scenes", "Test scenes", "Train accuracy",
             "Test accuracy"],
            [[r[1], r[2], r[3], _fmt(float(r[4])), _fmt(float(r[5]))] for r in rows]))
    else:
        warn_gaps.append(str(table2))
        section("Classifier accuracy by augmentation mode", _gap(str(table2)))

    # Before/after galleries.
    lookup = pipeline._scene_lookup()
    max_panels = pipeline.config.report.max_panels
    for direction, title in (("beautified", "Beautified scenes"),
                             ("uglified", "Uglified scenes")):
        rec_dir = ws / "beautified" / f"records_{direction}"
        if not rec_dir.exists():
            warn_gaps.append(str(rec_dir))
            section(title, _gap(str(rec_dir)))
            continue
        panels = []
        for rec_path in sorted(rec_dir.glob("*.json"))[:max_panels]:
            rec = json.loads(rec_path.read_text(encoding="utf-8"))
            original = lookup(rec["original_id"])
            template = sc.load_scene(ws / "beautified" / rec["template_file"])
            retrieved = lookup(rec["retrieved_id"])
            deltas = rec["explanation"]["element_deltas"][:4]
            delta_txt = ", ".join(f"{name} {delta:+.2f}" for name, delta in deltas)
            panels.append(
                '<div class="panel"><figure>'
                + svg_raster(original) + svg_raster(template) + svg_raster(retrieved)
                + f"<figcaption>{html.escape(original.id)} &rarr; template &rarr; "
                + f"{html.escape(retrieved.id)}<br>{html.escape(delta_txt)}</figcaption>"
                + "</figure></div>")
        section(title, "\n".join(panels) if panels else _gap(str(rec_dir)))

    # Taxonomy category counts.
    counts_path = ws / "metrics" / "taxonomy_counts.json"
    if counts_path.exists():
        counts = json.loads(counts_path.read_text(encoding="utf-8"))["counts"]
        cats = list(sc.CATEGORIES)
        chart = svg_grouped_bars(
            {d: [counts[d].get(c, 0) for c in cats] for d in counts},
            cats, ["#3f8f4f", "#c4463c"])
        section("Tag categories: beautified vs uglified", chart)
    else:
        warn_gaps.append(str(counts_path))
        section("Tag categories: beautified vs uglified", _gap(str(counts_path)))

    # Sky-presence and complexity histograms.
    metric_files = {d: ws / "metrics" / f"metrics_{d}.csv" for d in ("beautified", "uglified")}
    if all(p.exists() for p in metric_files.values()):
        reports = {d: mx.read_metrics_csv(p) for d, p in metric_files.items()}
        sky_series = {}
        cplx_series = {}
        edges = np.linspace(0.0, mx.MAX_COMPLEXITY, 7)
        for d, reps in reports.items():
            bins = np.bincount([r.sky_bin for r in reps], minlength=6).astype(float)
            sky_series[d] = list(100.0 * bins / max(1, len(reps)))
            hist, _ = np.histogram([r.complexity for r in reps], bins=edges)
            cplx_series[d] = list(100.0 * hist / max(1, len(reps)))
        sky_chart = svg_grouped_bars(sky_series, [f"bin {i}" for i in range(6)],
                                     ["#3f8f4f", "#c4463c"])
        cplx_chart = svg_grouped_bars(
            cplx_series, [f"{edges[i]:.2f}-{edges[i+1]:.2f}" for i in range(6)],
            ["#3f8f4f", "#c4463c"], width=560)
        means = {d: (float(np.mean([r.tree_fraction for r in reps])),
                     float(np.mean([r.sky_fraction for r in reps])),
                     float(np.mean([r.complexity for r in reps])))
                 for d, reps in reports.items()}
        summary = _table(
            ["Set", "Mean tree fraction", "Mean sky fraction", "Mean complexity"],
            [[d, _fmt(m[0]), _fmt(m[1]), _fmt(m[2])] for d, m in means.items()])
        section("Sky presence (percent of scenes per bin)", sky_chart)
        section("Visual complexity (percent of scenes per bin)", cplx_chart + summary)
    else:
        missing = next(str(p) for p in metric_files.values() if not p.exists())
        warn_gaps.append(missing)
        section("Sky presence and complexity", _gap(missing))

    # Augmentation propensity.
    prop_path = ws / "augmented" / "propensity.json"
    if prop_path.exists():
        prone = json.loads(prop_path.read_text(encoding="utf-8"))["propensity"]
        ordered = sorted(prone.items(), key=lambda kv: -kv[1])
        section("Propensity to survive distance augmentation", _table(
            ["Tag", "Propensity"], [[k, _fmt(v)] for k, v in ordered]))
    else:
        warn_gaps.append(str(prop_path))
        section("Propensity to survive distance augmentation", _gap(str(prop_path)))

    # Regression table.
    reg_path = ws / "analysis" / "regression.csv"
    if reg_path.exists():
        rows = _read_csv_rows(reg_path)[1:]
        section("Element-pair logistic regressions", _table(
            ["Pair of urban elements", "beta1", "beta2", "beta3",
             "Error rate (%)", "Converged"],
            [[r[0], _fmt(float(r[1])), _fmt(float(r[2])), _fmt(float(r[3])),
              _fmt(100.0 * float(r[4]), 1), "yes" if r[5] == "1" else "no"]
             for r in rows]) + (
            '<p class="meta">Interpretation: beta/4 upper-bounds the change in '
            'Pr(beautiful) per unit predictor change; bounds are reported in raw '
            'probability units in divide_by_four.json.</p>'))
    else:
        warn_gaps.append(str(reg_path))
        section("Element-pair logistic regressions", _gap(str(reg_path)))

    # Simulated A/B evaluation.
    eval_path = ws / "evaluation" / "evaluation.json"
    if eval_path.exists():
        ev = json.loads(eval_path.read_text(encoding="utf-8"))
        section("Simulated rater evaluation", _table(
            ["Pairs judged", "Votes per pair", "Rater noise", "Correct pick rate"],
            [[ev["pairs_judged"], ev["votes_per_pair"], ev["rater_noise"],
              _fmt(ev["correct_pick_rate"])]])
            + '<p class="meta">Rater quality has a single knob: the noise scale '
              'of the simulated preference model.</p>')
    else:
        warn_gaps.append(str(eval_path))
        section("Simulated rater evaluation", _gap(str(eval_path)))

    page = ("<!DOCTYPE html><html><head><meta charset=\"utf-8\">"
            "<title>Scene beautification report</title>"
            f"<style>{_STYLE}</style></head><body>"
            + "\n".join(body) + "</body></html>")
    (out_dir / "index.html").write_text(page, encoding="utf-8")

    if warn_gaps:
        import warnings
        warnings.warn("report emitted with gaps: " + "; ".join(sorted(warn_gaps)))
