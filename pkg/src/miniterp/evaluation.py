"""Agreement between predicted and gold interpretations.

All primitive kinds are compared on a common mask domain: regions as their
pixel masks, contours as their polylines dilated by one pixel, points as
3x3 blocks. The per-component metric is the Jaccard index of those masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .model import Assignment
from .primitives import Contour, PointFeature, Primitive, Region

_DILATE = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))


def _polyline_pixels(points: NDArray[np.float64]) -> set[tuple[int, int]]:
    """Integer pixels visited by the polyline, sampling each segment at
    steps of at most 0.5 px so sparse polylines rasterize without gaps."""
    px: set[tuple[int, int]] = set()
    pts = np.asarray(points, dtype=np.float64)
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        seg = math.hypot(x1 - x0, y1 - y0)
        n = max(1, int(math.ceil(seg / 0.5)))
        for i in range(n + 1):
            t = i / n
            px.add((int(round(x0 + t * (x1 - x0))), int(round(y0 + t * (y1 - y0)))))
    if len(pts) == 1:
        px.add((int(round(pts[0][0])), int(round(pts[0][1]))))
    return px


def rasterize(p: Primitive, dims: tuple[int, int]) -> NDArray[np.bool_]:
    """Common mask domain: region mask / contour dilated by 1 px (3x3
    element) / point as a 3x3 block, all clipped to dims."""
    w, h = dims
    mask = np.zeros((h, w), dtype=bool)
    if isinstance(p, Region):
        xs, ys = p.pixels[:, 0], p.pixels[:, 1]
        keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        mask[ys[keep], xs[keep]] = True
        return mask
    if isinstance(p, Contour):
        for x, y in _polyline_pixels(p.points):
            for dx, dy in _DILATE:
                xx, yy = x + dx, y + dy
                if 0 <= xx < w and 0 <= yy < h:
                    mask[yy, xx] = True
        return mask
    if isinstance(p, PointFeature):
        cx = int(round(p.position[0]))
        cy = int(round(p.position[1]))
        for dx, dy in _DILATE:
            xx, yy = cx + dx, cy + dy
            if 0 <= xx < w and 0 <= yy < h:
                mask[yy, xx] = True
        return mask
    raise TypeError(f"not a primitive: {type(p)!r}")


def mask_jaccard(a: NDArray[np.bool_], b: NDArray[np.bool_]) -> float:
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 0.0
    inter = int(np.logical_and(a, b).sum())
    return inter / union


@dataclass(frozen=True)
class EvalResult:
    per_component: dict[str, float]
    mean_jaccard: float
    matched_components: int
    classification: dict[str, int] | None = field(default=None)


def jaccard_correspondence(pred: Assignment, gold: Assignment,
                           dims: tuple[int, int]) -> EvalResult:
    """Per-component Jaccard of rasterized pred vs gold.

    Components with null gold are excluded; null pred against non-null gold
    scores 0. Raises ValueError when no component has non-null gold.
    """
    per: dict[str, float] = {}
    for name, gold_prim in gold.items():
        if gold_prim is None:
            continue
        pred_prim = pred.get(name)
        if pred_prim is None:
            per[name] = 0.0
        else:
            per[name] = mask_jaccard(rasterize(pred_prim, dims), rasterize(gold_prim, dims))
    if not per:
        raise ValueError("nothing to evaluate: every gold component is null")
    mean = sum(per.values()) / len(per)
    return EvalResult(per_component=per, mean_jaccard=mean, matched_components=len(per))


def eval_csv(rows: list[tuple[str, EvalResult]]) -> str:
    """CSV export: one row per image plus an aggregate mean row."""
    names = sorted({n for _, r in rows for n in r.per_component})
    out = ["image,mean_jaccard," + ",".join(names)]
    for image, r in rows:
        cells = [image, f"{r.mean_jaccard:.6f}"]
        for n in names:
            v = r.per_component.get(n)
            cells.append("" if v is None else f"{v:.6f}")
        out.append(",".join(cells))
    if rows:
        agg = sum(r.mean_jaccard for _, r in rows) / len(rows)
        per_means = []
        for n in names:
            vals = [r.per_component[n] for _, r in rows if n in r.per_component]
            per_means.append(f"{sum(vals) / len(vals):.6f}" if vals else "")
        out.append(",".join(["__aggregate__", f"{agg:.6f}"] + per_means))
    return "\n".join(out) + "\n"
