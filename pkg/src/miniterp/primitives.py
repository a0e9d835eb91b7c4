"""Local primitive extraction: points, contours, and regions.

The detectors are deliberately simple and fully deterministic:

* contours — gradient magnitude, non-maximum suppression with a single
  threshold (no hysteresis), 8-connected chain linking; at a fork the chain
  continues toward the neighbour that bends the path least and the remaining
  branch starts a new chain.
* points — endpoints of open chains, chain self-intersections, and local
  maxima of an isotropic (box + Laplacian) blob response.
* regions — equal-width intensity quantization followed by 4-connected
  component labeling.

Identical input and parameters produce a byte-identical serialized
PrimitiveSet.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from .raster import Image

# 8-neighbourhood in fixed clockwise-from-east order; ties in linking and
# every other neighbourhood scan resolve in this order.
NB8 = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))

FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


class PointKind(enum.Enum):
    CONTOUR_ENDPOINT = "contour-endpoint"
    JUNCTION = "junction"
    GRADIENT_PEAK = "gradient-peak"


@dataclass(frozen=True, eq=False)
class PointFeature:
    position: tuple[float, float]  # (x, y), sub-pixel
    kind: PointKind
    strength: float

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("point strength must be non-negative")


@dataclass(frozen=True, eq=False)
class Contour:
    """Ordered polyline; consecutive points at most 2 px apart."""

    points: NDArray[np.float64] = field(repr=False)  # shape (n, 2), columns (x, y)
    mean_strength: float
    closed: bool

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("contour needs an (n>=2, 2) point array")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @cached_property
    def arc_length(self) -> float:
        return float(np.hypot(*np.diff(self.points, axis=0).T).sum())

    @cached_property
    def centroid(self) -> tuple[float, float]:
        c = self.points.mean(axis=0)
        return (float(c[0]), float(c[1]))


@dataclass(frozen=True, eq=False)
class Region:
    """4-connected set of pixels."""

    pixels: NDArray[np.int64] = field(repr=False)  # shape (n, 2), columns (x, y)
    mean_intensity: float

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.int64)
        if px.ndim != 2 or px.shape[1] != 2 or px.shape[0] < 1:
            raise ValueError("region needs an (n>=1, 2) pixel array")
        order = np.lexsort((px[:, 0], px[:, 1]))
        px = np.ascontiguousarray(px[order])
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def area(self) -> int:
        return int(self.pixels.shape[0])

    @cached_property
    def centroid(self) -> tuple[float, float]:
        c = self.pixels.mean(axis=0)
        return (float(c[0]), float(c[1]))

    @cached_property
    def pixel_set(self) -> frozenset[tuple[int, int]]:
        return frozenset((int(x), int(y)) for x, y in self.pixels)

    def mask(self, width: int, height: int) -> NDArray[np.bool_]:
        m = np.zeros((height, width), dtype=bool)
        xs, ys = self.pixels[:, 0], self.pixels[:, 1]
        keep = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
        m[ys[keep], xs[keep]] = True
        return m


Primitive = PointFeature | Contour | Region


def primitive_kind(p: Primitive) -> str:
    if isinstance(p, PointFeature):
        return "point"
    if isinstance(p, Contour):
        return "contour"
    if isinstance(p, Region):
        return "region"
    raise TypeError(f"not a primitive: {type(p)!r}")


@dataclass(frozen=True)
class ExtractionParams:
    mag_threshold: float = 20.0
    min_contour_length: float = 4.0
    blob_threshold: float = 10.0
    num_levels: int = 4
    min_region_area: int = 6

    def __post_init__(self):
        if self.num_levels < 2:
            raise ValueError("num_levels must be at least 2")
        if self.min_region_area < 1:
            raise ValueError("min_region_area must be positive")


@dataclass(frozen=True, eq=False)
class PrimitiveSet:
    points: tuple[PointFeature, ...]
    contours: tuple[Contour, ...]
    regions: tuple[Region, ...]
    source_dims: tuple[int, int]  # (width, height)

    def by_kind(self, kind: str):
        return {"point": self.points, "contour": self.contours, "region": self.regions}[kind]

    def to_text(self) -> str:
        """Canonical structured-text serialization (JSON, sorted keys)."""
        doc = {
            "source_dims": list(self.source_dims),
            "points": [
                {
                    "position": [p.position[0], p.position[1]],
                    "kind": p.kind.value,
                    "strength": p.strength,
                }
                for p in self.points
            ],
            "contours": [
                {
                    "points": c.points.tolist(),
                    "mean_strength": c.mean_strength,
                    "closed": c.closed,
                }
                for c in self.contours
            ],
            "regions": [
                {
                    "pixels": r.pixels.tolist(),
                    "mean_intensity": r.mean_intensity,
                }
                for r in self.regions
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


# --- gradients --------------------------------------------------------------


def gradient_map(img: Image) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Central-difference gradient magnitude and orientation.

    Returns (magnitude, orientation); orientation is the gradient direction
    folded into [0, pi). Border pixels get magnitude 0. Requires >= 3x3.
    """
    if img.width < 3 or img.height < 3:
        raise ValueError("gradient_map needs an image of at least 3x3")
    px = img.pixels.astype(np.float64)
    gx = np.zeros_like(px)
    gy = np.zeros_like(px)
    gx[:, 1:-1] = (px[:, 2:] - px[:, :-2]) / 2.0
    gy[1:-1, :] = (px[2:, :] - px[:-2, :]) / 2.0
    mag = np.hypot(gx, gy)
    mag[0, :] = mag[-1, :] = 0.0
    mag[:, 0] = mag[:, -1] = 0.0
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    # Canonical representative: exactly pi folds to 0.
    theta[theta >= np.pi] = 0.0
    return mag, theta


# Canonical step vectors for the four orientation sectors (gradient axis).
_SECTOR_STEPS = ((1, 0), (1, 1), (0, 1), (-1, 1))


def _nms(mag: NDArray[np.float64], theta: NDArray[np.float64], threshold: float) -> NDArray[np.bool_]:
    """Single-threshold non-maximum suppression along the quantized gradient
    axis. A pixel survives if it is strictly greater than the neighbour on
    one side and at least equal on the other — so a two-pixel-wide plateau
    keeps exactly one ridge."""
    h, w = mag.shape
    # Sector index: orientation in [0,pi) quantized to 4 axes centred on
    # 0, 45, 90, 135 degrees.
    sector = ((theta + np.pi / 8) // (np.pi / 4)).astype(np.int64) % 4
    keep = np.zeros_like(mag, dtype=bool)
    cand_y, cand_x = np.nonzero(mag >= threshold)
    for y, x in zip(cand_y.tolist(), cand_x.tolist()):
        dx, dy = _SECTOR_STEPS[sector[y, x]]
        px_, py_ = x - dx, y - dy
        nx_, ny_ = x + dx, y + dy
        prev_mag = mag[py_, px_] if 0 <= px_ < w and 0 <= py_ < h else 0.0
        next_mag = mag[ny_, nx_] if 0 <= nx_ < w and 0 <= ny_ < h else 0.0
        m = mag[y, x]
        if m > prev_mag and m >= next_mag:
            keep[y, x] = True
    return keep


# --- contour linking --------------------------------------------------------


def _link_chains(
    edge: NDArray[np.bool_],
) -> tuple[list[list[tuple[int, int]]], list[bool]]:
    """8-connected chain linking over the edge mask. Seeds open chains at
    endpoints first (scan order), then picks up leftover cycles. At a fork
    the path continues toward the step that changes direction least; ties
    resolve in NB8 order."""
    h, w = edge.shape
    neighbour_count = ndimage.convolve(
        edge.astype(np.uint8), np.ones((3, 3), dtype=np.uint8), mode="constant"
    ) - edge.astype(np.uint8)

    visited = np.zeros_like(edge, dtype=bool)
    chains: list[list[tuple[int, int]]] = []
    closed_flags: list[bool] = []

    def unvisited_neighbours(x: int, y: int) -> list[tuple[int, int]]:
        out = []
        for dx, dy in NB8:
            nx_, ny_ = x + dx, y + dy
            if 0 <= nx_ < w and 0 <= ny_ < h and edge[ny_, nx_] and not visited[ny_, nx_]:
                out.append((nx_, ny_))
        return out

    def extend(chain: list[tuple[int, int]]) -> None:
        while True:
            cx, cy = chain[-1]
            cands = unvisited_neighbours(cx, cy)
            if not cands:
                return
            if len(chain) >= 2:
                pdx = cx - chain[-2][0]
                pdy = cy - chain[-2][1]
                pnorm = math.hypot(pdx, pdy)
                best = None
                best_cos = -2.0
                for nx_, ny_ in cands:
                    sdx, sdy = nx_ - cx, ny_ - cy
                    cos = (pdx * sdx + pdy * sdy) / (pnorm * math.hypot(sdx, sdy))
                    if cos > best_cos + 1e-12:
                        best_cos = cos
                        best = (nx_, ny_)
                nxt = best
            else:
                nxt = cands[0]
            chain.append(nxt)
            visited[nxt[1], nxt[0]] = True

    def trace(seed: tuple[int, int]) -> None:
        visited[seed[1], seed[0]] = True
        chain = [seed]
        extend(chain)
        closed = False
        if len(chain) >= 4:
            dx = abs(chain[-1][0] - chain[0][0])
            dy = abs(chain[-1][1] - chain[0][1])
            closed = max(dx, dy) == 1
        if not closed:
            chain.reverse()
            extend(chain)
            chain.reverse()
        chains.append(chain)
        closed_flags.append(closed)

    ys, xs = np.nonzero(edge)
    order = list(zip(xs.tolist(), ys.tolist()))
    order.sort(key=lambda p: (p[1], p[0]))
    # Pass 1: endpoints (at most one edge neighbour) seed open chains.
    for x, y in order:
        if not visited[y, x] and neighbour_count[y, x] <= 1:
            trace((x, y))
    # Pass 2: leftovers (cycles, fork remnants) in scan order.
    for x, y in order:
        if not visited[y, x]:
            trace((x, y))

    return chains, closed_flags


def _arc_length(chain: list[tuple[int, int]]) -> float:
    total = 0.0
    for (x0, y0), (x1, y1) in zip(chain, chain[1:]):
        total += math.hypot(x1 - x0, y1 - y0)
    return total


def extract_contours(img: Image, params: ExtractionParams = ExtractionParams()) -> list[Contour]:
    """Contours as linked edge chains, sorted by descending mean strength
    (stable: ties keep linking order)."""
    mag, theta = gradient_map(img)
    edge = _nms(mag, theta, params.mag_threshold)
    chains, closed_flags = _link_chains(edge)

    contours: list[Contour] = []
    for chain, closed in zip(chains, closed_flags):
        if len(chain) < 2 or _arc_length(chain) < params.min_contour_length:
            continue
        pts = np.array(chain, dtype=np.float64)
        strengths = mag[pts[:, 1].astype(int), pts[:, 0].astype(int)]
        contours.append(
            Contour(points=pts, mean_strength=float(strengths.mean()), closed=closed)
        )
    contours.sort(key=lambda c: -c.mean_strength)
    return contours


# --- points -----------------------------------------------------------------


def _blob_response(px: NDArray[np.float64]) -> NDArray[np.float64]:
    """Isotropic blob response: |Laplacian of a 3x3 box mean|. Zero where the
    support would leave the image."""
    h, w = px.shape
    resp = np.zeros_like(px)
    if h < 5 or w < 5:
        return resp
    box = ndimage.uniform_filter(px, size=3, mode="nearest")
    lap = np.zeros_like(px)
    lap[1:-1, 1:-1] = (
        4.0 * box[1:-1, 1:-1]
        - box[:-2, 1:-1]
        - box[2:, 1:-1]
        - box[1:-1, :-2]
        - box[1:-1, 2:]
    )
    resp[2:-2, 2:-2] = np.abs(lap[2:-2, 2:-2])
    return resp


def _plateau_peaks(resp: NDArray[np.float64], threshold: float) -> list[tuple[int, int]]:
    """Local maxima of resp above threshold. A pixel is a peak if it is >= all
    8 neighbours and strictly greater than every neighbour earlier in scan
    order — one peak per plateau."""
    h, w = resp.shape
    peaks: list[tuple[int, int]] = []
    cand_y, cand_x = np.nonzero(resp >= threshold)
    for y, x in zip(cand_y.tolist(), cand_x.tolist()):
        v = resp[y, x]
        ok = True
        for dx, dy in NB8:
            nx_, ny_ = x + dx, y + dy
            if not (0 <= nx_ < w and 0 <= ny_ < h):
                continue
            nv = resp[ny_, nx_]
            if nv > v:
                ok = False
                break
            if nv == v and (ny_ < y or (ny_ == y and nx_ < x)):
                ok = False
                break
        if ok:
            peaks.append((x, y))
    return peaks


def extract_points(
    img: Image,
    contours: list[Contour],
    params: ExtractionParams = ExtractionParams(),
) -> list[PointFeature]:
    """Point features: open-chain endpoints, chain junctions, blob peaks."""
    mag, _ = gradient_map(img)
    points: list[PointFeature] = []

    # Endpoints of open contours.
    for c in contours:
        if c.closed:
            continue
        for idx in (0, -1):
            x, y = c.points[idx]
            points.append(
                PointFeature(
                    position=(float(x), float(y)),
                    kind=PointKind.CONTOUR_ENDPOINT,
                    strength=float(mag[int(y), int(x)]),
                )
            )

    # Junctions: chain pixels with >= 3 chain neighbours.
    chain_pixels: set[tuple[int, int]] = set()
    for c in contours:
        chain_pixels.update((int(x), int(y)) for x, y in c.points)
    for x, y in sorted(chain_pixels, key=lambda p: (p[1], p[0])):
        n = sum((x + dx, y + dy) in chain_pixels for dx, dy in NB8)
        if n >= 3:
            points.append(
                PointFeature(
                    position=(float(x), float(y)),
                    kind=PointKind.JUNCTION,
                    strength=float(mag[y, x]),
                )
            )

    # Blob peaks.
    resp = _blob_response(img.pixels.astype(np.float64))
    for x, y in _plateau_peaks(resp, params.blob_threshold):
        points.append(
            PointFeature(
                position=(float(x), float(y)),
                kind=PointKind.GRADIENT_PEAK,
                strength=float(resp[y, x]),
            )
        )
    return points


# --- regions ----------------------------------------------------------------


def extract_regions(img: Image, params: ExtractionParams = ExtractionParams()) -> list[Region]:
    """Equal-width intensity quantization + 4-connected components, sorted by
    descending area (stable: ties keep bin/label scan order). Components
    smaller than min_region_area are dropped; masks are pairwise disjoint by
    construction."""
    px = img.pixels
    bins = (px.astype(np.int64) * params.num_levels) // 256
    regions: list[Region] = []
    raw: list[tuple[int, Region]] = []
    order = 0
    for level in range(params.num_levels):
        mask = bins == level
        if not mask.any():
            continue
        labels, n = ndimage.label(mask, structure=FOUR_CONN)
        for lab in range(1, n + 1):
            ys, xs = np.nonzero(labels == lab)
            if xs.size < params.min_region_area:
                continue
            pixels = np.column_stack([xs, ys]).astype(np.int64)
            mean_int = float(px[ys, xs].astype(np.float64).mean())
            raw.append((order, Region(pixels=pixels, mean_intensity=mean_int)))
            order += 1
    raw.sort(key=lambda t: (-t[1].area, t[0]))
    regions = [r for _, r in raw]
    return regions


def extract_all(img: Image, params: ExtractionParams = ExtractionParams()) -> PrimitiveSet:
    contours = extract_contours(img, params)
    points = extract_points(img, contours, params)
    regions = extract_regions(img, params)
    return PrimitiveSet(
        points=tuple(points),
        contours=tuple(contours),
        regions=tuple(regions),
        source_dims=(img.width, img.height),
    )
