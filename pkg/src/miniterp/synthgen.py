"""Seeded synthetic corpus of two-agent "hug" glyphs.

Each glyph is drawn on a light canvas (x right, y down) from four flat gray
levels, every pair at least 60 apart so one quantization level maps to one
drawn material even under the additive noise:

* two filled torso disks at mid-height (torso level),
* a dark face dot inside torso-1,
* an arm drawn as two straight dark stroke segments — a shallow rise above
  torso-1's shoulder and a descent toward the palm — with occlusion gaps at
  the unseen shoulder, elbow, and wrist joints,
* a palm blob (palm level) where the descent line meets torso-2,
* a thick dark rim arc plastered over torso-2's lower-left boundary.

The occlusion gaps keep every facing pair of gradient ridges more than 2 px
apart, so edge linking can never fuse an arm chain with a torso ring, the
palm rim, or the other segment: each segment always extracts as the same
clean pair of parallel chains. In a positive sample the descent line runs
at the palm, which rests against torso-2's right side with a pixel gap of
at most 1. In a negative sample the descent runs shallow and ends high,
and the palm floats off torso-2's lower-right at 4 px or more. Layout is
rejection-sampled against hard clearance constraints, so the same seed
always yields byte-identical images; positives and negatives built from the
same seed share their torso layout.

The palm of a positive always lies right of ``ceil(0.8 * width)``, so the
top-left corner crop of a resolution-reduction step removes exactly the palm
(and the arm's final descent) while leaving both torsos, the face, and the
rim stroke intact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from .corpus import GlyphSample
from .model import Assignment
from .primitives import FOUR_CONN, Contour, Primitive, Region
from .relations import boundary_pixels
from .raster import Image
from .rng import SplitMix64

# Gray levels; all pairwise differences >= 60 and one per quantization bin
# at the default four levels (bin = value // 64).
LEVEL_BACKGROUND = 230
LEVEL_TORSO = 165
LEVEL_PALM = 95
LEVEL_STROKE = 30

NOISE_SIGMA = 4.0
GLYPH_DIMS = (30, 30)
POSITIVE_CONTACT_MAX = 1.0  # px, palm-to-torso-2 in positives
NEGATIVE_CONTACT_MIN = 4.0  # px, palm-to-torso-2 in negatives
ARM_RADIUS = 1.9  # px, half-width of the arm band
ARM_RIDGE_RADIUS = 1.8  # px, where the dash's edge ridge actually settles

COMPONENT_NAMES = (
    "torso-region-1", "torso-region-2", "palm-region", "back-contour",
    "arm-contour-1", "arm-contour-2", "face-region-1", "face-region-2",
)

_BG, _T1, _T2, _STRIP, _ARM, _FACE, _PALM = range(7)
_ELEMENT_LEVEL = {
    _BG: LEVEL_BACKGROUND, _T1: LEVEL_TORSO, _T2: LEVEL_TORSO,
    _STRIP: LEVEL_STROKE, _ARM: LEVEL_STROKE, _FACE: LEVEL_STROKE,
    _PALM: LEVEL_PALM,
}

_MAX_LAYOUT_ATTEMPTS = 300


class GenerationError(RuntimeError):
    """No layout satisfied the clearance constraints within the attempt budget."""


@dataclass(frozen=True)
class PlantedGlyph:
    """One glyph inside a scene: its box and gold geometry in scene coordinates."""

    box: tuple[int, int, int, int]  # (x, y, w, h)
    gold: Assignment
    label: str
    placement: dict[str, Any] | None = field(default=None, repr=False)


@dataclass(frozen=True)
class SceneSample:
    name: str
    image: Image
    planted: tuple[PlantedGlyph, ...]
    seed: int


def _band_pixels(points: NDArray, radius: float) -> NDArray:
    """Pixels whose center lies within `radius` of any sample point — a
    smooth stroke band roughly 2*radius wide. Wide enough that its two
    edges produce separate, cleanly linkable gradient ridges."""
    px: set[tuple[int, int]] = set()
    rsq = radius * radius
    for x, y in points:
        for iy in range(int(math.floor(y - radius)),
                        int(math.ceil(y + radius)) + 1):
            for ix in range(int(math.floor(x - radius)),
                            int(math.ceil(x + radius)) + 1):
                if (ix - x) ** 2 + (iy - y) ** 2 <= rsq:
                    px.add((ix, iy))
    return np.array(sorted(px), dtype=np.int64)


def _min_dist(a: NDArray, b: NDArray) -> float:
    """Minimum Euclidean distance between two (n, 2) pixel arrays."""
    if len(a) == 0 or len(b) == 0:
        return math.inf
    diff = a[:, None, :].astype(np.float64) - b[None, :, :].astype(np.float64)
    return float(np.sqrt((diff ** 2).sum(axis=2)).min())


def _element_pixels(elem: NDArray, eid: int) -> NDArray:
    yx = np.argwhere(elem == eid)
    return yx[:, ::-1]  # -> (x, y)


def _sample_params(rng: SplitMix64, dims: tuple[int, int]) -> dict[str, float]:
    """Draw one full parameter set. Always consumes the same stream length,
    so positives and negatives from the same seed share their layout."""
    w, h = dims
    sx, sy = w / 30.0, h / 30.0
    s = min(sx, sy)
    band = math.ceil(0.8 * w)
    p: dict[str, float] = {"band": float(band)}
    p["cx1"] = rng.uniform(0.187, 0.214) * w
    p["cy1"] = rng.uniform(0.483, 0.550) * h
    p["r1"] = max(3.2, rng.uniform(4.0, 4.3) * s)
    p["edge"] = band - rng.uniform(0.60, 0.85)
    p["r2"] = max(3.8, rng.uniform(4.4, 5.4) * s)
    p["cy2"] = p["cy1"] + rng.uniform(-1.2, 1.2) * s
    p["face_dx"] = rng.uniform(-0.7, 0.0) * s
    p["face_dy"] = (-0.8 + rng.uniform(-0.3, 0.3)) * s
    p["theta_s"] = math.radians(rng.uniform(-58.0, -40.0))
    p["s0_off"] = rng.uniform(6.8, 7.5)
    p["strip_t0"] = math.radians(rng.uniform(128.0, 136.0))
    p["strip_dt"] = math.radians(rng.uniform(70.0, 85.0))
    p["pr"] = max(1.45, rng.uniform(1.4, 1.7) * s)
    p["gap"] = rng.uniform(0.35, 0.55)
    p["py_off"] = rng.uniform(-1.0, 1.0)
    # Arm segments: two short thick dashes — upper arm and forearm — with
    # the shoulder, elbow, and wrist joints all hidden by occlusion gaps.
    # At this stroke width a dash sheds a single edge ridge that wraps the
    # whole outline, so each dash extracts as one loop chain instead of a
    # pair of parallel flank chains. The angle ranges stay clear of the
    # suppression-sector boundaries at 22.5 + k*45 degrees, where survivor
    # pixels turn ragged.
    p["rise_ang"] = math.radians(rng.uniform(-38.0, -30.0))
    p["rise_len"] = rng.uniform(3.2, 3.8) * s
    p["seg_gap"] = rng.uniform(8.0, 8.6) * s
    # The elbow gap crosses nearly level: the occluded stretch has its own
    # direction, flatter than the forearm it hands off to.
    p["gap_ang"] = math.radians(rng.uniform(6.0, 12.0))
    p["desc_ang"] = math.radians(rng.uniform(14.0, 36.0))
    p["desc_len"] = rng.uniform(3.4, 4.0) * s
    # Negative forearm: stays flat near the top, far from torso-2.
    p["neg_desc_ang"] = math.radians(rng.uniform(3.0, 12.0))
    p["neg_desc_len"] = rng.uniform(3.2, 3.8) * s
    # Negative palm floats off torso-2's lower-right, detached.
    p["neg_palm_phi"] = math.radians(rng.uniform(40.0, 50.0))
    p["neg_palm_gap"] = rng.uniform(4.4, 4.9)
    return p


def _build(p: dict[str, float], label: str,
           dims: tuple[int, int]) -> tuple[NDArray, NDArray, Assignment, dict] | None:
    """Attempt one layout; None when any clearance constraint fails."""
    w, h = dims
    positive = label == "positive"
    cx1, cy1, r1 = p["cx1"], p["cy1"], p["r1"]
    r2 = p["r2"]
    cx2, cy2 = p["edge"] - r2, p["cy2"]
    band = int(p["band"])
    pr, gap = p["pr"], p["gap"]

    if (cx2 - r2) - (cx1 + r1) < 2.0:
        return None

    yy, xx = np.mgrid[0:h, 0:w]
    t1_mask = (xx - cx1) ** 2 + (yy - cy1) ** 2 <= r1 ** 2
    t2_mask = (xx - cx2) ** 2 + (yy - cy2) ** 2 <= r2 ** 2

    # Rim stroke: a thick dark arc plastered over torso-2's lower-left rim,
    # half inside the disk and half outside. Covering the rim (instead of
    # abutting it) keeps the arc's inner ridge on top of torso-2's boundary
    # — the only strong chain in the image that also hugs that boundary.
    rr = np.sqrt((xx - cx2) ** 2 + (yy - cy2) ** 2)
    ang = np.mod(np.arctan2(yy - cy2, xx - cx2), 2.0 * math.pi)
    dt = p["strip_dt"]
    in_arc = np.mod(ang - p["strip_t0"], 2.0 * math.pi) <= dt
    strip_mask = in_arc & (rr > r2 - 1.2) & (rr <= r2 + 1.2)
    if int(strip_mask.sum()) < 8:
        return None
    _, n_strip = ndimage.label(strip_mask, structure=FOUR_CONN)
    if n_strip != 1:
        return None

    # Palm center. Positives rest it radially against torso-2's right side;
    # negatives float it off torso-2's lower-right, well detached.
    py = cy2 + p["py_off"]
    if positive:
        palm_radius = r2 + gap + pr
        px_ = cx2 + math.sqrt(max(palm_radius ** 2 - (py - cy2) ** 2, 0.25))
        palm_c = np.array([px_, py])
    else:
        radius = r2 + p["neg_palm_gap"] + pr
        palm_c = np.array([cx2 + radius * math.cos(p["neg_palm_phi"]),
                           cy2 + radius * math.sin(p["neg_palm_phi"])])

    # Arm: two short thick dashes — upper arm and forearm — with the
    # shoulder, elbow, and wrist all hidden by occlusion gaps. Each dash is
    # wide enough that its edge ridge wraps the outline as one loop chain.
    # The gaps and the clearance constraints below keep every facing pair
    # of ridges more than 2 px apart (ridges curl roughly 1 px past the
    # dash pixels on each side), so edge linking can never fuse an arm
    # chain with anything else. Positives aim the forearm line at the palm
    # and build backwards from it; negatives build forwards from torso-1's
    # shoulder and leave the forearm flat and high.
    u1 = np.array([math.cos(p["rise_ang"]), math.sin(p["rise_ang"])])
    ug = np.array([math.cos(p["gap_ang"]), math.sin(p["gap_ang"])])
    if positive:
        end = np.array([palm_c[0] + 0.4, palm_c[1] - pr - 6.2])
        u2 = np.array([math.cos(p["desc_ang"]), math.sin(p["desc_ang"])])
        d0 = end - p["desc_len"] * u2
        rise_end = d0 - p["seg_gap"] * ug
        s0 = rise_end - p["rise_len"] * u1
    else:
        s0 = np.array([cx1 + (r1 + p["s0_off"]) * math.cos(p["theta_s"]),
                       cy1 + (r1 + p["s0_off"]) * math.sin(p["theta_s"])])
        rise_end = s0 + p["rise_len"] * u1
        u2 = np.array([math.cos(p["neg_desc_ang"]), math.sin(p["neg_desc_ang"])])
        d0 = rise_end + p["seg_gap"] * ug
        end = d0 + p["neg_desc_len"] * u2
    if rise_end[1] < 4.6:
        return None

    t_samples = np.linspace(0.0, 1.0, 48)[:, None]
    rise_px = _band_pixels(s0 + t_samples * (rise_end - s0), ARM_RADIUS)
    desc_px = _band_pixels(d0 + t_samples * (end - d0), ARM_RADIUS)
    if _min_dist(rise_px, desc_px) < 4.0:
        return None
    arm_px = np.unique(np.concatenate([rise_px, desc_px]), axis=0)
    palm_mask = (xx - palm_c[0]) ** 2 + (yy - palm_c[1]) ** 2 <= pr ** 2

    # Face dot: 3x3 block inside torso-1.
    fcx = int(math.floor(cx1 + p["face_dx"] + 0.5))
    fcy = int(math.floor(cy1 + p["face_dy"] + 0.5))
    face_px = np.array([(fcx + dx, fcy + dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1)],
                       dtype=np.int64)
    if math.hypot(fcx - cx1, fcy - cy1) + 2.13 > r1 + 0.2:
        return None

    # Bounds: keep every drawn pixel at least one pixel off the canvas edge.
    elements = [arm_px, face_px,
                _mask_px(palm_mask), _mask_px(strip_mask),
                _mask_px(t1_mask), _mask_px(t2_mask)]
    for arr in elements:
        if len(arr) == 0:
            return None
        if arr[:, 0].min() < 1 or arr[:, 0].max() > w - 2:
            return None
        if arr[:, 1].min() < 1 or arr[:, 1].max() > h - 2:
            return None

    t1_px, t2_px = _mask_px(t1_mask), _mask_px(t2_mask)
    strip_px, palm_px = _mask_px(strip_mask), _mask_px(palm_mask)

    if len(palm_px) < 6:
        return None
    if _min_dist(t1_px, t2_px) < 2.0:
        return None
    if _min_dist(strip_px, t1_px) < 2.0 or _min_dist(strip_px, arm_px) < 4.2:
        return None
    if _min_dist(strip_px, palm_px) < 2.0:
        return None
    if _min_dist(face_px, arm_px) < 4.2:
        return None
    if _min_dist(arm_px, t1_px) < 4.5:
        return None
    if _min_dist(palm_px, arm_px) < 4.2:
        return None
    palm_t2 = _min_dist(palm_px, t2_px)
    arm_t2 = _min_dist(arm_px, t2_px)
    if arm_t2 < 4.2:
        return None
    if positive:
        if palm_t2 > POSITIVE_CONTACT_MAX or palm_px[:, 0].min() < band:
            return None
    else:
        if palm_t2 < NEGATIVE_CONTACT_MIN:
            return None
        if _min_dist(palm_px, t1_px) < 2.0 or _min_dist(palm_px, face_px) < 2.0:
            return None

    # Paint (later elements overwrite earlier ones).
    elem = np.zeros((h, w), dtype=np.int8)
    elem[t1_mask] = _T1
    elem[t2_mask] = _T2
    elem[strip_mask] = _STRIP
    elem[arm_px[:, 1], arm_px[:, 0]] = _ARM
    elem[face_px[:, 1], face_px[:, 0]] = _FACE
    elem[palm_mask] = _PALM

    # Both torsos must survive the face/arm bites as single 4-connected blobs.
    for eid in (_T1, _T2):
        _, n = ndimage.label(elem == eid, structure=FOUR_CONN)
        if n != 1:
            return None

    canvas = np.empty((h, w), dtype=np.int16)
    for eid, level in _ELEMENT_LEVEL.items():
        canvas[elem == eid] = level

    gold = _gold_from_layout(elem, s0, rise_end, d0, end, cx2, cy2)
    placement = {
        "label": label, "torso1": [cx1, cy1, r1], "torso2": [cx2, cy2, r2],
        "palm": [float(palm_c[0]), float(palm_c[1]), pr],
        "rise": [[float(s0[0]), float(s0[1])],
                 [float(rise_end[0]), float(rise_end[1])]],
        "descent": [[float(d0[0]), float(d0[1])],
                    [float(end[0]), float(end[1])]],
        "arc": [p["strip_t0"], dt],
        "palm_to_torso2": palm_t2, "band": band,
    }
    return canvas, elem, gold, placement


def _mask_px(mask: NDArray) -> NDArray:
    return np.argwhere(mask)[:, ::-1].astype(np.int64)


def _capsule_outline(a: NDArray, b: NDArray, radius: float) -> NDArray:
    """Closed outline of a stadium (segment a->b swept by `radius`):
    both straight flanks plus semicircular caps, traced in order."""
    u = b - a
    u = u / np.linalg.norm(u)
    n = np.array([u[1], -u[0]])
    ts = np.linspace(0.0, 1.0, 9)[:, None]
    spine = a[None, :] + ts * (b - a)[None, :]
    phi0 = math.atan2(n[1], n[0])
    caps_b = [b + radius * np.array([math.cos(phi0 - k), math.sin(phi0 - k)])
              for k in np.linspace(math.pi / 5, 4 * math.pi / 5, 4)]
    caps_a = [a + radius * np.array([math.cos(phi0 + k), math.sin(phi0 + k)])
              for k in np.linspace(math.pi + math.pi / 5,
                                   math.pi + 4 * math.pi / 5, 4)]
    return np.concatenate([spine + radius * n[None, :], np.array(caps_b),
                           spine[::-1] - radius * n[None, :], np.array(caps_a)])


def _gold_from_layout(elem, s0, rise_end, d0, end, cx2, cy2) -> Assignment:
    """Gold geometry per component, in the primitive vocabulary.

    Each thick arm dash sheds one edge ridge that wraps its whole outline,
    so the gold polyline is the dash's stadium outline at the radius where
    that ridge settles. The back contour is annotated as torso-2's
    boundary-pixel trace — the same point set the boundary-agreement
    feature measures against. The covering arc welds its own edge ridges
    into the torso's boundary ridge, so the curve pressed along the back
    survives extraction only as part of whichever chain traces that
    boundary; annotating the trace itself makes the grounded component the
    chain covering most of it, which is stable under every way suppression
    happens to sever the ridge system and agrees with what the feature
    ranks highest. Annotating the arc's own span instead is ambiguous — a
    severed few-point splinter, or the wrong half of a split ring, sits
    closer to a short arc than the dominant boundary chain does, and the
    grounded identity then flips from sample to sample."""
    upper = _capsule_outline(s0, rise_end, ARM_RIDGE_RADIUS)
    lower = _capsule_outline(d0, end, ARM_RIDGE_RADIUS)

    def region_of(eid: int, level: int) -> Region:
        return Region(pixels=_element_pixels(elem, eid), mean_intensity=float(level))

    t2_region = region_of(_T2, LEVEL_TORSO)
    bnd = boundary_pixels(t2_region).astype(np.float64)
    ang = np.arctan2(bnd[:, 1] - cy2, bnd[:, 0] - cx2)
    rim = bnd[np.argsort(ang)]

    return {
        "torso-region-1": region_of(_T1, LEVEL_TORSO),
        "torso-region-2": t2_region,
        "palm-region": region_of(_PALM, LEVEL_PALM),
        "back-contour": Contour(points=rim, mean_strength=0.0, closed=False),
        "arm-contour-1": Contour(points=upper, mean_strength=0.0, closed=True),
        "arm-contour-2": Contour(points=lower, mean_strength=0.0, closed=True),
        "face-region-1": region_of(_FACE, LEVEL_STROKE),
        "face-region-2": None,
    }


def _layout_glyph(rng: SplitMix64, label: str,
                  dims: tuple[int, int]) -> tuple[NDArray, NDArray, Assignment, dict]:
    for _ in range(_MAX_LAYOUT_ATTEMPTS):
        params = _sample_params(rng, dims)
        built = _build(params, label, dims)
        if built is not None:
            return built
    raise GenerationError(
        f"no valid {label} layout within {_MAX_LAYOUT_ATTEMPTS} attempts at dims {dims}")


def _apply_noise(canvas: NDArray, rng: SplitMix64, sigma: float) -> NDArray[np.uint8]:
    """Additive Gaussian noise, drawn per pixel in row-major order."""
    h, w = canvas.shape
    out = np.empty((h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            v = math.floor(canvas[y, x] + sigma * rng.normal() + 0.5)
            out[y, x] = min(255, max(0, v))
    return out


def generate(seed: int, label: str = "positive",
             dims: tuple[int, int] = GLYPH_DIMS,
             sigma: float = NOISE_SIGMA) -> GlyphSample:
    """One glyph sample, bit-exact for a given (seed, label, dims, sigma)."""
    if label not in ("positive", "negative"):
        raise ValueError(f"label must be 'positive' or 'negative', got {label!r}")
    if dims[0] < 24 or dims[1] < 24:
        raise ValueError("glyph dims must be at least 24x24")
    root = SplitMix64(seed)
    canvas, _, gold, placement = _layout_glyph(root.spawn(1), label, dims)
    pixels = _apply_noise(canvas, root.spawn(2), sigma)
    return GlyphSample(name=f"{label}-{seed}", image=Image(pixels=pixels),
                       gold=gold, label=label, seed=seed, placement=placement)


def _translate(prim: Primitive | None, dx: int, dy: int) -> Primitive | None:
    if prim is None:
        return None
    if isinstance(prim, Region):
        return Region(pixels=prim.pixels + np.array([dx, dy], dtype=np.int64),
                      mean_intensity=prim.mean_intensity)
    if isinstance(prim, Contour):
        return Contour(points=prim.points + np.array([dx, dy], dtype=np.float64),
                       mean_strength=prim.mean_strength, closed=prim.closed)
    raise TypeError(f"cannot translate {type(prim)!r}")


def generate_scene(seed: int, n_glyphs: int = 2,
                   dims: tuple[int, int] = (120, 120),
                   labels: tuple[str, ...] | None = None,
                   sigma: float = NOISE_SIGMA) -> SceneSample:
    """A larger canvas with n_glyphs non-overlapping planted glyphs.

    Boxes are rejection-sampled with at least a 6 px mutual gap; placement
    failing 1000 straight draws raises GenerationError.
    """
    if labels is None:
        labels = tuple("positive" for _ in range(n_glyphs))
    if len(labels) != n_glyphs:
        raise ValueError("labels length must equal n_glyphs")
    gw, gh = GLYPH_DIMS
    w, h = dims
    if w < gw + 4 or h < gh + 4:
        raise ValueError("scene dims too small for a planted glyph")
    root = SplitMix64(seed)
    place_rng = root.spawn(3)
    boxes: list[tuple[int, int]] = []
    for _ in range(n_glyphs):
        for _attempt in range(1000):
            gx = place_rng.randint(2, w - gw - 2)
            gy = place_rng.randint(2, h - gh - 2)
            if all(max(abs(gx - bx), abs(gy - by)) >= gw + 6 for bx, by in boxes):
                boxes.append((gx, gy))
                break
        else:
            raise GenerationError(
                f"could not place {n_glyphs} glyph boxes in {dims} after 1000 attempts")

    canvas = np.full((h, w), LEVEL_BACKGROUND, dtype=np.int16)
    planted = []
    for i, ((gx, gy), label) in enumerate(zip(boxes, labels)):
        glyph_canvas, _, gold, placement = _layout_glyph(root.spawn(100 + i), label,
                                                         GLYPH_DIMS)
        canvas[gy:gy + gh, gx:gx + gw] = glyph_canvas
        scene_gold = {name: _translate(prim, gx, gy) for name, prim in gold.items()}
        planted.append(PlantedGlyph(box=(gx, gy, gw, gh), gold=scene_gold,
                                    label=label, placement=placement))
    pixels = _apply_noise(canvas, root.spawn(4), sigma)
    return SceneSample(name=f"scene-{seed}", image=Image(pixels=pixels),
                       planted=tuple(planted), seed=seed)


def make_corpus(base_seed: int, n_positive: int, n_negative: int,
                dims: tuple[int, int] = GLYPH_DIMS,
                sigma: float = NOISE_SIGMA) -> list[GlyphSample]:
    """Deterministic mixed corpus: positives on seeds base..base+n_pos-1,
    negatives on the following n_neg seeds."""
    samples = []
    for i in range(n_positive):
        s = generate(base_seed + i, "positive", dims, sigma)
        samples.append(GlyphSample(name=f"pos-{i:04d}", image=s.image, gold=s.gold,
                                   label=s.label, seed=s.seed, placement=s.placement))
    for j in range(n_negative):
        s = generate(base_seed + n_positive + j, "negative", dims, sigma)
        samples.append(GlyphSample(name=f"neg-{j:04d}", image=s.image, gold=s.gold,
                                   label=s.label, seed=s.seed, placement=s.placement))
    return samples
