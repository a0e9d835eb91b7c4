"""Rendering: SVG overlays of interpretations and report figures.

Overlays are hand-assembled SVG so identical inputs produce identical
bytes — polylines for contours, translucent pixel fills for regions,
ring markers for points, over the raster embedded as a PNG data URI.
Report figures (score histograms, per-image evaluation bars, ablation
deltas) render through the matplotlib Agg backend to PNG files.
"""

from __future__ import annotations

import base64
from io import BytesIO
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
from PIL import Image as PILImage  # noqa: E402

from .primitives import Contour, PointFeature, Region  # noqa: E402
from .raster import Image  # noqa: E402

PALETTE = (
    "#d62728",  # red
    "#1f77b4",  # blue
    "#2ca02c",  # green
    "#ff7f0e",  # orange
    "#9467bd",  # violet
    "#17becf",  # cyan
    "#bcbd22",  # olive
    "#e377c2",  # pink
    "#8c564b",  # brown
    "#7f7f7f",  # gray
)


def png_data_uri(image: Image) -> str:
    buf = BytesIO()
    PILImage.fromarray(image.pixels, mode="L").save(
        buf, format="PNG", optimize=False)
    return "data:image/png;base64," + base64.b64encode(
        buf.getvalue()).decode("ascii")


def _svg_primitive(prim, color: str, s: int) -> str:
    if isinstance(prim, Region):
        d = "".join(f"M{int(x) * s} {int(y) * s}h{s}v{s}h-{s}z"
                    for x, y in prim.pixels)
        return f'<path d="{d}" fill="{color}" fill-opacity="0.45"/>'
    if isinstance(prim, Contour):
        pts = " ".join(f"{(x + 0.5) * s:.1f},{(y + 0.5) * s:.1f}"
                       for x, y in prim.points)
        tag = "polygon" if prim.closed else "polyline"
        return (f'<{tag} points="{pts}" fill="none" stroke="{color}" '
                f'stroke-width="{0.22 * s:.2f}"/>')
    if isinstance(prim, PointFeature):
        cx = (prim.position[0] + 0.5) * s
        cy = (prim.position[1] + 0.5) * s
        return (f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{0.6 * s:.1f}" '
                f'fill="none" stroke="{color}" '
                f'stroke-width="{0.22 * s:.2f}"/>')
    raise TypeError(f"not a primitive: {type(prim)!r}")


def svg_overlay(image: Image,
                assignment: Mapping[str, object],
                component_order: Sequence[str] | None = None, *,
                upscale: int = 8) -> str:
    """SVG of the image with each assigned component drawn over it in a
    fixed palette color, plus a legend column; null components appear in
    the legend only."""
    s = upscale
    names = (list(component_order) if component_order is not None
             else sorted(assignment))
    legend_w = 16 + 9 * max((len(n) for n in names), default=0) + 60
    iw, ih = image.width * s, image.height * s
    width = iw + legend_w
    height = max(ih, 16 * (len(names) + 1))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" '
        'fill="#ffffff"/>',
        f'<image x="0" y="0" width="{iw}" height="{ih}" '
        'preserveAspectRatio="none" '
        f'style="image-rendering:pixelated" href="{png_data_uri(image)}"/>',
    ]
    for i, name in enumerate(names):
        color = PALETTE[i % len(PALETTE)]
        prim = assignment.get(name)
        if prim is not None:
            parts.append(_svg_primitive(prim, color, s))
        y = 16 * (i + 1)
        suffix = "" if prim is not None else " (null)"
        parts.append(f'<rect x="{iw + 8}" y="{y - 10}" width="11" '
                     f'height="11" fill="{color}"/>')
        parts.append(f'<text x="{iw + 24}" y="{y}" font-family="monospace" '
                     f'font-size="12">{escape(name)}{suffix}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_claims(image: Image, claims, detections, *,
               upscale: int = 4) -> str:
    """SVG of a full image with claim footprints as translucent pixel
    fills (colored per component name), detection boxes as dashed
    rectangles, and a legend."""
    s = upscale
    names = sorted({c.component for c in claims})
    color_of = {n: PALETTE[i % len(PALETTE)] for i, n in enumerate(names)}
    legend_w = 16 + 9 * max((len(n) for n in names), default=0) + 60
    iw, ih = image.width * s, image.height * s
    width = iw + legend_w
    height = max(ih, 16 * (len(names) + 1))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" '
        'fill="#ffffff"/>',
        f'<image x="0" y="0" width="{iw}" height="{ih}" '
        'preserveAspectRatio="none" '
        f'style="image-rendering:pixelated" href="{png_data_uri(image)}"/>',
    ]
    for claim in claims:
        color = color_of[claim.component]
        d = "".join(f"M{x * s} {y * s}h{s}v{s}h-{s}z"
                    for x, y in sorted(claim.pixels))
        parts.append(f'<path d="{d}" fill="{color}" fill-opacity="0.4"/>')
    for det in detections:
        x, y, w, h = det.box
        parts.append(f'<rect x="{x * s}" y="{y * s}" width="{w * s}" '
                     f'height="{h * s}" fill="none" stroke="#000000" '
                     f'stroke-width="1" stroke-dasharray="4 3"/>')
    for i, name in enumerate(names):
        y = 16 * (i + 1)
        parts.append(f'<rect x="{iw + 8}" y="{y - 10}" width="11" '
                     f'height="11" fill="{color_of[name]}"/>')
        parts.append(f'<text x="{iw + 24}" y="{y}" font-family="monospace" '
                     f'font-size="12">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --- report figures ---------------------------------------------------------


def save_score_figure(positive: Sequence[float], negative: Sequence[float],
                      threshold: float | None, path) -> None:
    """Class-conditional score histograms with the decision threshold."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6), dpi=100)
    bins = 24
    ax.hist(negative, bins=bins, alpha=0.6, label="negative")
    ax.hist(positive, bins=bins, alpha=0.6, label="positive")
    if threshold is not None:
        ax.axvline(threshold, color="black", linestyle="--",
                   label=f"threshold {threshold:.3f}")
    ax.set_xlabel("interpretation score")
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_eval_figure(names: Sequence[str], means: Sequence[float],
                     path) -> None:
    """Per-image mean overlap bars with the corpus mean drawn across."""
    n = len(names)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.12 * n + 1.5), 3.6), dpi=100)
    ax.bar(range(n), means, width=0.9)
    if n:
        overall = sum(means) / n
        ax.axhline(overall, color="black", linestyle="--",
                   label=f"mean {overall:.3f}")
        ax.legend(fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("mean Jaccard")
    ax.set_xlabel("image")
    if n <= 30:
        ax.set_xticks(range(n))
        ax.set_xticklabels(names, rotation=90, fontsize=6)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_ablation_figure(labels: Sequence[str],
                         deltas_by_metric: Mapping[str, Sequence[float]],
                         path) -> None:
    """Grouped bars: metric drop per zeroed relation."""
    n = len(labels)
    metrics = list(deltas_by_metric)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * n + 1.5), 3.8), dpi=100)
    width = 0.8 / max(1, len(metrics))
    for j, metric in enumerate(metrics):
        xs = [i + j * width for i in range(n)]
        ax.bar(xs, deltas_by_metric[metric], width=width, label=metric)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(n)])
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("metric drop (baseline - ablated)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_overlay_set(items: Iterable[tuple[str, Image, Mapping[str, object]]],
                     order: Sequence[str], out_dir) -> list:
    """Write one overlay SVG per (name, image, assignment) triple into
    out_dir; returns the written paths."""
    from pathlib import Path

    out = []
    base = Path(out_dir)
    for name, image, assignment in items:
        p = base / f"{name}.svg"
        p.write_text(svg_overlay(image, assignment, order))
        out.append(p)
    return out
