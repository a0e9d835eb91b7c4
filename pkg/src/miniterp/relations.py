"""Unary and pairwise relation features between primitives.

Every evaluator returns a numpy vector with entries in [0, 1]; scalar
relations return a length-1 vector. A null operand yields the relation's
missing value: the zero vector. Relation kinds are referenced by string id
("exists", "touch", "relpos", "continuity", "bounds", "shape") in model
files.

Angles use the y-up convention (a point with a smaller image row is "north"
of one with a larger row).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import cdist

from .primitives import Contour, PointFeature, Primitive, Region

DEFAULT_TOL = 2.0
DEFAULT_STRENGTH_SCALE = 50.0

# Bin labels for relpos, counterclockwise from east (y up).
RELPOS_BINS = ("E", "NE", "N", "NW", "W", "SW", "S", "SE")


@dataclass(frozen=True)
class RelationKind:
    name: str
    arity: int
    dim: int
    # Allowed primitive kind per operand slot; None = any.
    operand_kinds: tuple[str | None, ...]


RELATION_KINDS: dict[str, RelationKind] = {
    k.name: k
    for k in (
        RelationKind("exists", 1, 1, (None,)),
        RelationKind("touch", 2, 1, (None, None)),
        RelationKind("relpos", 2, 8, (None, None)),
        RelationKind("continuity", 2, 1, ("contour", "contour")),
        RelationKind("bounds", 2, 2, ("contour", "region")),
        RelationKind("shape", 1, 4, ("region",)),
    )
}


def point_set(p: Primitive) -> NDArray[np.float64]:
    """The primitive's point set as an (n, 2) float array of (x, y)."""
    if isinstance(p, PointFeature):
        return np.array([p.position], dtype=np.float64)
    if isinstance(p, Contour):
        return np.asarray(p.points, dtype=np.float64)
    if isinstance(p, Region):
        return p.pixels.astype(np.float64)
    raise TypeError(f"not a primitive: {type(p)!r}")


def centroid(p: Primitive) -> tuple[float, float]:
    if isinstance(p, PointFeature):
        return p.position
    return p.centroid


def min_distance(a: Primitive, b: Primitive) -> float:
    return float(cdist(point_set(a), point_set(b)).min())


def boundary_pixels(r: Region) -> NDArray[np.int64]:
    """Mask pixels with a 4-neighbour outside the mask (image border counts
    as outside)."""
    px = r.pixels
    members = r.pixel_set
    out = []
    for x, y in px:
        xi, yi = int(x), int(y)
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if (xi + dx, yi + dy) not in members:
                out.append((xi, yi))
                break
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def convex_hull(points: NDArray[np.int64]) -> list[tuple[int, int]]:
    """Andrew's monotone chain; returns hull vertices counterclockwise."""
    pts = sorted({(int(x), int(y)) for x, y in points})
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[int, int]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[int, int]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _dist_point_segment(p, a, b) -> float:
    px_, py_ = p
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0:
        return math.hypot(px_ - ax, py_ - ay)
    t = ((px_ - ax) * dx + (py_ - ay) * dy) / seg2
    t = min(1.0, max(0.0, t))
    return math.hypot(px_ - (ax + t * dx), py_ - (ay + t * dy))


# --- evaluators ---------------------------------------------------------------


def rel_exists(p: Primitive | None, *, strength_scale: float = DEFAULT_STRENGTH_SCALE,
               source_dims: tuple[int, int] | None = None) -> NDArray[np.float64]:
    """Saturating evidence strength; 0 for a null assignment. Regions use
    area normalized by the source pixel count as their strength."""
    if p is None:
        return np.zeros(1)
    if isinstance(p, Contour):
        s = p.mean_strength
    elif isinstance(p, PointFeature):
        s = p.strength
    else:
        if source_dims is None:
            raise ValueError("rel_exists on a region needs source_dims")
        w, h = source_dims
        s = p.area / float(w * h)
    return np.array([min(1.0, s / strength_scale)])


def rel_touch(a: Primitive | None, b: Primitive | None, *,
              tol: float = DEFAULT_TOL) -> NDArray[np.float64]:
    """exp(-d/tol) for the minimum distance d between the point sets."""
    if a is None or b is None:
        return np.zeros(1)
    return np.array([math.exp(-min_distance(a, b) / tol)])


def rel_relative_position(a: Primitive | None, b: Primitive | None) -> NDArray[np.float64]:
    """Soft 8-bin direction histogram of b relative to a (bins sum to 1).

    The angle of (centroid(b) - centroid(a)) is binned into 45-degree
    sectors centred on E, NE, N, ... (y up), with linear interpolation
    between the two nearest bin centres. Identical centroids give the
    uniform vector.
    """
    if a is None or b is None:
        return np.zeros(8)
    ax, ay = centroid(a)
    bx, by = centroid(b)
    dx = bx - ax
    dy = -(by - ay)
    if dx == 0.0 and dy == 0.0:
        return np.full(8, 1.0 / 8.0)
    ang = math.atan2(dy, dx) % (2.0 * math.pi)
    pos = ang / (math.pi / 4.0)  # in units of bins
    lo = int(math.floor(pos)) % 8
    frac = pos - math.floor(pos)
    out = np.zeros(8)
    out[lo] += 1.0 - frac
    out[(lo + 1) % 8] += frac
    return out


def _end_tangent(c: Contour, end: int) -> tuple[float, float]:
    pts = c.points
    if end == 0:
        v = pts[1] - pts[0]
    else:
        v = pts[-1] - pts[-2]
    return (float(v[0]), float(v[1]))


def rel_continuity(c1: Primitive | None, c2: Primitive | None, *,
                   tol: float = DEFAULT_TOL) -> NDArray[np.float64]:
    """Smooth-continuation affinity between two open contours: max over
    endpoint pairs of exp(-gap/tol) * cos^2(tangent angle difference).
    Closed contours (or null operands) give 0."""
    if c1 is None or c2 is None:
        return np.zeros(1)
    if not isinstance(c1, Contour) or not isinstance(c2, Contour):
        raise TypeError("continuity requires two contours")
    if c1.closed or c2.closed:
        return np.zeros(1)
    best = 0.0
    for e1 in (0, -1):
        p1 = c1.points[e1]
        t1 = _end_tangent(c1, e1)
        n1 = math.hypot(*t1)
        for e2 in (0, -1):
            p2 = c2.points[e2]
            t2 = _end_tangent(c2, e2)
            n2 = math.hypot(*t2)
            gap = math.hypot(p1[0] - p2[0], p1[1] - p2[1])
            if n1 == 0.0 or n2 == 0.0:
                cos2 = 0.0
            else:
                cosv = (t1[0] * t2[0] + t1[1] * t2[1]) / (n1 * n2)
                cos2 = cosv * cosv
            best = max(best, math.exp(-gap / tol) * cos2)
    return np.array([min(1.0, best)])


def rel_contour_bounds_region(c: Primitive | None, r: Primitive | None) -> NDArray[np.float64]:
    """Two-sided boundary agreement: [containment, coverage].

    * containment — fraction of the contour's polyline points within
      1.5 px of the region's boundary pixels (the contour stays on the
      boundary).
    * coverage — fraction of the region's boundary pixels within 1.5 px
      of the contour (the contour traces most of the boundary).

    Containment alone cannot tell a long arc from a short splinter lying
    on the same boundary; coverage breaks that tie.
    """
    if c is None or r is None:
        return np.zeros(2)
    if not isinstance(c, Contour) or not isinstance(r, Region):
        raise TypeError("bounds requires (contour, region)")
    bnd = boundary_pixels(r)
    if bnd.shape[0] == 0:
        return np.zeros(2)
    d = cdist(np.asarray(c.points, dtype=np.float64), bnd.astype(np.float64))
    containment = float((d.min(axis=1) <= 1.5).mean())
    coverage = float((d.min(axis=0) <= 1.5).mean())
    return np.array([containment, coverage])


def shape_descriptor(r: Primitive | None, *,
                     source_dims: tuple[int, int]) -> NDArray[np.float64]:
    """[normalized area, elongation, solidity, boundary convexity].

    * normalized area — area / (source width * height)
    * elongation — 1 - lambda2/lambda1 of the pixel-coordinate covariance
      (1 for degenerate masks)
    * solidity — area / bounding-box area
    * boundary convexity — fraction of boundary pixels within 0.5 px of the
      convex hull polygon
    """
    if r is None:
        return np.zeros(4)
    if not isinstance(r, Region):
        raise TypeError("shape requires a region")
    w, h = source_dims
    px = r.pixels.astype(np.float64)
    norm_area = r.area / float(w * h)

    if r.area < 2:
        elong = 1.0
    else:
        cov = np.cov(px.T, bias=True)
        eig = np.linalg.eigvalsh(cov)
        lam1, lam2 = float(eig[1]), float(eig[0])
        if lam1 <= 1e-12:
            elong = 1.0
        else:
            elong = 1.0 - max(0.0, lam2) / lam1

    xs, ys = r.pixels[:, 0], r.pixels[:, 1]
    bbox_area = int(xs.max() - xs.min() + 1) * int(ys.max() - ys.min() + 1)
    solidity = r.area / float(bbox_area)

    bnd = boundary_pixels(r)
    hull = convex_hull(r.pixels)
    if len(hull) <= 2:
        convexity = 1.0
    else:
        edges = list(zip(hull, hull[1:] + hull[:1]))
        on = 0
        for x, y in bnd:
            dmin = min(_dist_point_segment((float(x), float(y)), a, b) for a, b in edges)
            if dmin <= 0.5:
                on += 1
        convexity = on / float(bnd.shape[0])

    return np.clip(np.array([norm_area, elong, solidity, convexity]), 0.0, 1.0)


def evaluate(kind: str, operands: tuple[Primitive | None, ...],
             params: dict[str, float], source_dims: tuple[int, int]) -> NDArray[np.float64]:
    """Dispatch a relation by string id. Unknown kinds raise KeyError."""
    spec = RELATION_KINDS[kind]
    if len(operands) != spec.arity:
        raise ValueError(f"{kind} expects {spec.arity} operand(s), got {len(operands)}")
    tol = float(params.get("tol", DEFAULT_TOL))
    scale = float(params.get("strength_scale", DEFAULT_STRENGTH_SCALE))
    if kind == "exists":
        return rel_exists(operands[0], strength_scale=scale, source_dims=source_dims)
    if kind == "touch":
        return rel_touch(operands[0], operands[1], tol=tol)
    if kind == "relpos":
        return rel_relative_position(operands[0], operands[1])
    if kind == "continuity":
        return rel_continuity(operands[0], operands[1], tol=tol)
    if kind == "bounds":
        return rel_contour_bounds_region(operands[0], operands[1])
    if kind == "shape":
        return shape_descriptor(operands[0], source_dims=source_dims)
    raise KeyError(kind)
