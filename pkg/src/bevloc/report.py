"""Static report emission: report.json plus a deterministic SVG figure.

The SVG is written by hand (fixed float formatting, no timestamps) so a
report renders byte-identically across runs: an APE histogram on the left,
the median-error-vs-iteration curve on the right.
"""

from __future__ import annotations

import json
from pathlib import Path

from .evalkit import BenchmarkReport

_W, _H = 760, 300
_PLOT_W, _PLOT_H = 310, 200
_MARGIN_L, _MARGIN_T = 60, 40


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _histogram_svg(report: BenchmarkReport, x0: int) -> list[str]:
    edges = report.ape_histogram["edges_m"]
    counts = report.ape_histogram["counts"]
    peak = max(max(counts), 1)
    parts = [
        f'<text x="{x0 + _PLOT_W / 2:.0f}" y="24" text-anchor="middle" font-size="13">APE histogram (m)</text>'
    ]
    n = len(counts)
    bar_w = _PLOT_W / n
    for i, c in enumerate(counts):
        h = _PLOT_H * c / peak
        x = x0 + i * bar_w
        y = _MARGIN_T + _PLOT_H - h
        parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(bar_w - 2)}" height="{_fmt(h)}" fill="#4878a8"/>'
        )
        parts.append(
            f'<text x="{_fmt(x + bar_w / 2)}" y="{_MARGIN_T + _PLOT_H + 14}" text-anchor="middle" '
            f'font-size="8">{edges[i]:g}-{edges[i + 1]:g}</text>'
        )
        if c:
            parts.append(
                f'<text x="{_fmt(x + bar_w / 2)}" y="{_fmt(y - 3)}" text-anchor="middle" font-size="8">{c}</text>'
            )
    return parts


def _iteration_curve_svg(report: BenchmarkReport, x0: int) -> list[str]:
    per_iter = report.per_iteration
    parts = [
        f'<text x="{x0 + _PLOT_W / 2:.0f}" y="24" text-anchor="middle" font-size="13">'
        "median APE vs iteration</text>"
    ]
    if not per_iter:
        return parts
    apes = [row["ape_median_m"] for row in per_iter]
    top = max(max(apes), 1e-6)
    pts = []
    for i, ape in enumerate(apes):
        x = x0 + (_PLOT_W * i / max(len(apes) - 1, 1))
        y = _MARGIN_T + _PLOT_H * (1.0 - ape / top)
        pts.append((x, y))
    path = "M " + " L ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in pts)
    parts.append(f'<path d="{path}" stroke="#a84848" stroke-width="2" fill="none"/>')
    for i, ((x, y), ape) in enumerate(zip(pts, apes)):
        parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="#a84848"/>')
        parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y - 8)}" text-anchor="middle" font-size="9">{ape:.2f}</text>'
        )
        parts.append(
            f'<text x="{_fmt(x)}" y="{_MARGIN_T + _PLOT_H + 14}" text-anchor="middle" font-size="9">'
            f"{per_iter[i]['iteration']}</text>"
        )
    return parts


def render_report_svg(report: BenchmarkReport) -> str:
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    body += _histogram_svg(report, _MARGIN_L)
    body += _iteration_curve_svg(report, _MARGIN_L + _PLOT_W + 80)
    summary = (
        f"n={report.sample_count}  APE mean {report.ape_mean_m:.3f} m / median "
        f"{report.ape_median_m:.3f} m  AOE mean {report.aoe_mean_deg:.3f}°  "
        f"R@1m {report.recall_position[1.0]:.3f}  R@1° {report.recall_orientation[1.0]:.3f}"
    )
    body.append(
        f'<text x="{_W / 2:.0f}" y="{_H - 12}" text-anchor="middle" font-size="11">{summary}</text>'
    )
    body.append("</svg>")
    return "\n".join(body) + "\n"


def format_table(report: BenchmarkReport) -> str:
    """Human-readable summary table (paper-style columns)."""
    head_pos = " ".join(f"R@{t:g}m" for t in sorted(report.recall_position))
    head_ori = " ".join(f"R@{t:g}°" for t in sorted(report.recall_orientation))
    row_pos = " ".join(f"{report.recall_position[t] * 100:5.1f}" for t in sorted(report.recall_position))
    row_ori = " ".join(f"{report.recall_orientation[t] * 100:5.1f}" for t in sorted(report.recall_orientation))
    return "\n".join(
        [
            f"samples: {report.sample_count}   config: {report.config_hash}",
            f"{head_pos} | {head_ori} | APE(m) AOE(deg)",
            f"{row_pos} | {row_ori} | {report.ape_mean_m:6.2f} {report.aoe_mean_deg:8.2f}",
            f"median APE {report.ape_median_m:.3f} m, median AOE {report.aoe_median_deg:.3f} deg",
        ]
    )


def emit_report(report: BenchmarkReport, out_dir: str | Path) -> tuple[Path, Path]:
    """Write report.json and report.svg; both byte-deterministic."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    svg_path = out_dir / "report.svg"
    json_path.write_text(json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")
    svg_path.write_text(render_report_svg(report))
    return json_path, svg_path
