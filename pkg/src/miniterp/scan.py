"""Whole-image scanning.

A model describes a configuration roughly one window in size, so larger
images are handled by sliding a fixed window over the image at several
scales, scoring each window with the beam solver, and keeping windows
that clear the model's calibrated score threshold. Overlapping windows
are pruned by greedy non-maximum suppression; surviving detections can
be re-scored against the full-resolution pixels (`refine`) and merged
into a single set of component claims over the original image
(`combine`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .evaluation import rasterize
from .model import Interpretation, InterpretationModel
from .primitives import ExtractionParams, extract_all
from .raster import (
    Image,
    ReductionExhaustedError,
    ReductionStep,
    StepKind,
    reduce as reduce_image,
)
from .search import (
    DEFAULT_EXACT_LIMIT,
    DEFAULT_K,
    ExactLimitError,
    UninterpretableError,
    build_candidates,
    interpret_beam,
)

SCAN_WINDOW = 30
SCAN_STRIDE = 6
SCAN_SCALES = (1.0, 0.75, 0.5)
SCAN_BEAM_WIDTH = 12
NMS_IOU = 0.5
MERGE_IOU = 0.5

Box = tuple[int, int, int, int]  # x, y, w, h


@dataclass(frozen=True, eq=False)
class DetectedConfiguration:
    """One window that scored above its model's threshold.

    `box` is in full-image pixel coordinates; the interpretation lives
    in the local frame of the analyzed content, mapped to the image by
    full = origin + pixel_size * local. After `refine`, `score` holds
    the full-resolution score and `scan_score` keeps the windowed one.
    """

    model: InterpretationModel
    box: Box
    scale: float
    interpretation: Interpretation
    scan_score: float
    local_dims: tuple[int, int]
    origin: tuple[float, float]
    pixel_size: float
    refined: bool = False
    refine_failed: bool = False

    @property
    def score(self) -> float:
        return self.interpretation.score

    @property
    def assignment(self):
        return self.interpretation.assignment

    @property
    def label(self) -> str:
        return self.model.class_label


@dataclass(frozen=True)
class ScanResult:
    detections: tuple[DetectedConfiguration, ...]
    windows_scored: int
    # True when the image is smaller than the window at every scale;
    # detections is then empty.
    window_exceeds_image: bool = False


@dataclass(frozen=True)
class Claim:
    """A component's footprint in full-image coordinates.

    `sources` lists the indices (into the detection tuple) that support
    the claim; merged claims carry the union footprint and the maximum
    confidence among their sources.
    """

    label: str
    component: str
    pixels: frozenset[tuple[int, int]]
    confidence: float
    sources: tuple[int, ...]


@dataclass(frozen=True)
class GlobalInterpretation:
    dims: tuple[int, int]
    claims: tuple[Claim, ...]
    detections: tuple[DetectedConfiguration, ...]

    def claims_for(self, component: str) -> tuple[Claim, ...]:
        return tuple(c for c in self.claims if c.component == component)


def _grid(size: int, window: int, stride: int) -> list[int]:
    """Window origins covering [0, size): a regular stride grid plus a
    final flush-to-edge position when the stride does not divide evenly."""
    last = size - window
    xs = list(range(0, last + 1, stride))
    if xs[-1] != last:
        xs.append(last)
    return xs


def box_iou(a: Box, b: Box) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union


def _nms(detections: Sequence[DetectedConfiguration],
         iou_threshold: float) -> list[DetectedConfiguration]:
    """Greedy suppression: visit by descending score (ties by discovery
    order) and drop any detection whose box overlaps an already-kept one
    with IoU above the threshold."""
    order = sorted(range(len(detections)),
                   key=lambda i: (-detections[i].score, i))
    kept: list[DetectedConfiguration] = []
    for i in order:
        det = detections[i]
        if any(box_iou(det.box, k.box) > iou_threshold for k in kept):
            continue
        kept.append(det)
    return kept


def _scaled_to_full(v: float, inv: float) -> int:
    return int(math.floor(v * inv + 0.5))


def scan(image: Image,
         models: InterpretationModel | Sequence[InterpretationModel], *,
         window: int = SCAN_WINDOW,
         stride: int = SCAN_STRIDE,
         scales: Sequence[float] = SCAN_SCALES,
         k: int = DEFAULT_K,
         beam_width: int = SCAN_BEAM_WIDTH,
         exact_limit: int = DEFAULT_EXACT_LIMIT,
         extraction: ExtractionParams | None = None,
         nms_iou: float = NMS_IOU) -> ScanResult:
    """Slide a window over the image at each scale and keep windows whose
    best interpretation under some model scores above that model's
    calibrated threshold.

    Each scale resamples the full image by area averaging before
    windowing; the window itself is the models' native resolution.
    Windows a model rejects (a required component with no candidates, or
    a candidate product past `exact_limit`) are skipped for that model.
    Returns the surviving detections after greedy non-maximum
    suppression, sorted by descending score; when the image is smaller
    than the window at every scale the result is empty and flagged.
    """
    model_list = ([models] if isinstance(models, InterpretationModel)
                  else list(models))
    if not model_list:
        raise ValueError("at least one model is required")
    for m in model_list:
        if m.score_threshold is None:
            raise ValueError(
                f"model {m.class_label!r} has no calibrated score "
                "threshold; calibrate before scanning")
    if window < 2:
        raise ValueError("window must be at least 2 pixels")
    if stride < 1:
        raise ValueError("stride must be positive")
    params = extraction if extraction is not None else ExtractionParams()
    # A window whose total intensity range cannot produce a gradient
    # magnitude at the extraction threshold yields no contours or peak
    # points, so it can be skipped when every model requires one.
    all_need_edges = all(
        any(not c.optional and c.kind in ("contour", "point")
            for c in m.components)
        for m in model_list)
    reject_ptp = math.sqrt(2.0) * params.mag_threshold

    raw: list[DetectedConfiguration] = []
    windows_scored = 0
    any_fit = False
    for scale in scales:
        if not 0.0 < scale <= 1.0:
            raise ValueError(f"scale must lie in (0, 1], got {scale}")
        if scale == 1.0:
            scaled = image
        else:
            try:
                scaled = reduce_image(
                    image, ReductionStep(StepKind.RESOLUTION, scale))
            except ReductionExhaustedError:
                continue
        if scaled.width < window or scaled.height < window:
            continue
        any_fit = True
        inv = 1.0 / scale
        dims = (window, window)
        for y0 in _grid(scaled.height, window, stride):
            for x0 in _grid(scaled.width, window, stride):
                tile = scaled.pixels[y0:y0 + window, x0:x0 + window]
                if all_need_edges and np.ptp(tile) < reject_ptp:
                    continue
                prims = extract_all(Image(tile), params)
                for model in model_list:
                    try:
                        table = build_candidates(model, prims, k=k)
                        interp = interpret_beam(
                            model, table, dims, beam_width,
                            exact_limit=exact_limit)
                    except (UninterpretableError, ExactLimitError):
                        continue
                    windows_scored += 1
                    if interp.score > model.score_threshold:
                        bx = _scaled_to_full(x0, inv)
                        by = _scaled_to_full(y0, inv)
                        bw = _scaled_to_full(x0 + window, inv) - bx
                        bh = _scaled_to_full(y0 + window, inv) - by
                        raw.append(DetectedConfiguration(
                            model=model,
                            box=(bx, by, bw, bh),
                            scale=scale,
                            interpretation=interp,
                            scan_score=interp.score,
                            local_dims=dims,
                            origin=(x0 * inv, y0 * inv),
                            pixel_size=inv,
                        ))
    kept = _nms(raw, nms_iou)
    return ScanResult(tuple(kept), windows_scored,
                      window_exceeds_image=not any_fit)


def refine(det: DetectedConfiguration, full: Image, *,
           k: int = DEFAULT_K,
           beam_width: int = SCAN_BEAM_WIDTH,
           exact_limit: int = DEFAULT_EXACT_LIMIT,
           extraction: ExtractionParams | None = None,
           ) -> DetectedConfiguration:
    """Re-score a detection against the full-resolution pixels of its
    box. The refined score replaces `score`; the windowed one stays in
    `scan_score`. A box the solver cannot interpret at full resolution
    keeps its original interpretation and is marked `refine_failed`."""
    params = extraction if extraction is not None else ExtractionParams()
    x, y, w, h = det.box
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(full.width, x + w), min(full.height, y + h)
    if x1 - x0 < 2 or y1 - y0 < 2:
        return replace(det, refined=True, refine_failed=True)
    prims = extract_all(Image(full.pixels[y0:y1, x0:x1]), params)
    dims = (x1 - x0, y1 - y0)
    try:
        table = build_candidates(det.model, prims, k=k)
        interp = interpret_beam(det.model, table, dims, beam_width,
                                exact_limit=exact_limit)
    except (UninterpretableError, ExactLimitError):
        return replace(det, refined=True, refine_failed=True)
    return DetectedConfiguration(
        model=det.model,
        box=det.box,
        scale=det.scale,
        interpretation=interp,
        scan_score=det.scan_score,
        local_dims=dims,
        origin=(float(x0), float(y0)),
        pixel_size=1.0,
        refined=True,
    )


def refine_all(detections: Iterable[DetectedConfiguration], full: Image,
               **kwargs) -> tuple[DetectedConfiguration, ...]:
    return tuple(refine(det, full, **kwargs) for det in detections)


def _full_pixels(prim, det: DetectedConfiguration,
                 dims: tuple[int, int]) -> frozenset[tuple[int, int]]:
    """Rasterize a primitive in its detection's local frame and map the
    mask into full-image pixel coordinates, clipped to the image."""
    mask = rasterize(prim, det.local_dims)
    ys, xs = np.nonzero(mask)
    w, h = dims
    ox, oy = det.origin
    f = det.pixel_size
    out: set[tuple[int, int]] = set()
    if f == 1.0 and float(ox).is_integer() and float(oy).is_integer():
        iox, ioy = int(ox), int(oy)
        for x, y in zip(xs.tolist(), ys.tolist()):
            gx, gy = x + iox, y + ioy
            if 0 <= gx < w and 0 <= gy < h:
                out.add((gx, gy))
        return frozenset(out)
    # A local pixel covers an f-by-f block of full-resolution pixels.
    for x, y in zip(xs.tolist(), ys.tolist()):
        gx0 = int(math.floor(ox + f * x + 1e-9))
        gx1 = max(gx0 + 1, int(math.ceil(ox + f * (x + 1) - 1e-9)))
        gy0 = int(math.floor(oy + f * y + 1e-9))
        gy1 = max(gy0 + 1, int(math.ceil(oy + f * (y + 1) - 1e-9)))
        for gx in range(gx0, gx1):
            for gy in range(gy0, gy1):
                if 0 <= gx < w and 0 <= gy < h:
                    out.add((gx, gy))
    return frozenset(out)


def combine(detections: Sequence[DetectedConfiguration], *,
            dims: tuple[int, int] | None = None,
            merge_iou: float = MERGE_IOU) -> GlobalInterpretation:
    """Merge per-window assignments into one claim set over the image.

    Claims are grouped by (class label, component name). Two claims for
    the same component merge when their footprints overlap with IoU at
    or above `merge_iou` (union footprint, confidence = max source
    score). Claims that overlap below that are in conflict and the
    higher-scoring detection's claim wins; disjoint claims coexist as
    separate instances of the component. Empty input yields an empty
    interpretation.
    """
    dets = tuple(detections)
    if dims is None:
        right = max((d.box[0] + d.box[2] for d in dets), default=0)
        bottom = max((d.box[1] + d.box[3] for d in dets), default=0)
        dims = (right, bottom)
    per_component: dict[tuple[str, str],
                        list[tuple[frozenset, float, int]]] = {}
    for idx, det in enumerate(dets):
        for name, prim in det.assignment.items():
            if prim is None:
                continue
            px = _full_pixels(prim, det, dims)
            if px:
                per_component.setdefault((det.label, name), []).append(
                    (px, det.score, idx))
    claims: list[Claim] = []
    for label, name in sorted(per_component):
        entries = sorted(per_component[label, name],
                         key=lambda e: (-e[1], e[2]))
        accepted: list[list] = []  # [mutable pixel set, confidence, sources]
        for px, score, idx in entries:
            merged = conflicted = False
            for acc in accepted:
                inter = len(acc[0] & px)
                if inter == 0:
                    continue
                union = len(acc[0] | px)
                if inter / union >= merge_iou:
                    acc[0] |= px
                    acc[1] = max(acc[1], score)
                    acc[2].append(idx)
                    merged = True
                else:
                    conflicted = True
                break
            if not merged and not conflicted:
                accepted.append([set(px), score, [idx]])
        for acc in accepted:
            claims.append(Claim(label, name, frozenset(acc[0]), acc[1],
                                tuple(sorted(acc[2]))))
    claims.sort(key=lambda c: (c.label, c.component, -c.confidence,
                               c.sources))
    return GlobalInterpretation(dims, tuple(claims), dets)
