"""Grounding gold annotations and learning the interpretation scorer.

Training is a structured perceptron over full component assignments: the
current weights pick the best assignment; whenever its feature vector
differs from the gold assignment's, the weights move toward gold. Negative
samples never enter the weight updates — they only calibrate the
classification threshold afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .corpus import GlyphSample
from .evaluation import jaccard_correspondence
from .model import Assignment, InterpretationModel, Interpretation
from .primitives import (Contour, ExtractionParams, PointFeature, Primitive,
                         PrimitiveSet, Region, extract_all)
from .relations import _dist_point_segment
from .search import (DEFAULT_EXACT_LIMIT, DEFAULT_K, ExactLimitError,
                     UninterpretableError, build_candidates, build_score_tables,
                     interpret_beam, interpret_exact)

REGION_IOU_FLOOR = 0.3
CONTOUR_DIST_CEIL = 3.0
CONTOUR_DIST_TRUNCATION = 4.0
# Same proximity tolerance the boundary-agreement feature uses, so the
# grounded contour is the one that feature ranks highest.
COVERAGE_TOL = 1.5
POINT_DIST_CEIL = 3.0

TRAIN_BEAM_WIDTH = 16


@dataclass(frozen=True)
class GroundingResult:
    """Gold components resolved to extracted primitives (None = unresolved
    or annotated-absent); `unmatched` lists annotated components that no
    extracted primitive explained."""

    assignment: Assignment
    unmatched: tuple[str, ...]

    @property
    def fully_grounded(self) -> bool:
        return not self.unmatched


def _region_iou(gold: Region, cand: Region) -> float:
    inter = len(gold.pixel_set & cand.pixel_set)
    if inter == 0:
        return 0.0
    return inter / len(gold.pixel_set | cand.pixel_set)


def _truncated_mean_to_polyline(points: NDArray, poly: NDArray) -> tuple[float, int]:
    """(mean truncated distance, count within COVERAGE_TOL) from each of
    `points` to the polyline `poly`; each point's contribution is
    truncated so one far stretch cannot swamp the mean."""
    covered = 0
    total = 0.0
    for p in points:
        best = math.inf
        for a, b in zip(poly, poly[1:]):
            d = _dist_point_segment(p, a, b)
            if d < best:
                best = d
        if best <= COVERAGE_TOL:
            covered += 1
        total += min(best, CONTOUR_DIST_TRUNCATION)
    return total / len(points), covered


def _polyline_match(ann: NDArray, cand: NDArray) -> tuple[float, float, float]:
    """(coverage, forward mean, symmetric mean) between an annotated
    polyline and a candidate: coverage is the fraction of annotated
    points within COVERAGE_TOL of the candidate; the symmetric mean is
    the two-way truncated Chamfer distance, which also charges the
    candidate for material far from the annotation (tails, spurs)."""
    fwd, covered = _truncated_mean_to_polyline(ann, cand)
    rev, _ = _truncated_mean_to_polyline(cand, ann)
    return covered / len(ann), fwd, 0.5 * (fwd + rev)


def ground_gold(gold: Assignment, prims: PrimitiveSet) -> GroundingResult:
    """Match each annotated component to its best extracted primitive.

    Regions match by pixel IoU, largest wins, floor 0.3. Contours match
    by coverage — the fraction of annotated polyline points within 1.5 px
    of the extracted polyline — largest wins, symmetric truncated Chamfer
    distance breaking ties, and a best match is discarded when the mean
    annotation-to-candidate distance exceeds 3 px. Points match by
    Euclidean distance (<= 3 px). Sub-floor best matches leave the
    component unmatched. Exact ties keep the earlier extraction.
    """
    assignment: dict[str, Primitive | None] = {}
    unmatched: list[str] = []
    for name, g in gold.items():
        if g is None:
            assignment[name] = None
            continue
        best: Primitive | None = None
        if isinstance(g, Region):
            best_iou = REGION_IOU_FLOOR
            for cand in prims.regions:
                iou = _region_iou(g, cand)
                if iou > best_iou:
                    best, best_iou = cand, iou
        elif isinstance(g, Contour):
            best_cov, best_sym, best_fwd = -1.0, math.inf, math.inf
            for cand in prims.contours:
                cov, fwd, sym = _polyline_match(g.points, cand.points)
                if cov > best_cov or (cov == best_cov and sym < best_sym):
                    best, best_cov, best_sym, best_fwd = cand, cov, sym, fwd
            if best is not None and best_fwd > CONTOUR_DIST_CEIL:
                best = None
        elif isinstance(g, PointFeature):
            best_d = POINT_DIST_CEIL
            gx, gy = g.position
            for cand in prims.points:
                d = math.hypot(cand.position[0] - gx, cand.position[1] - gy)
                if d < best_d:
                    best, best_d = cand, d
        else:
            raise TypeError(f"gold entry for {name!r} is not a primitive")
        assignment[name] = best
        if best is None:
            unmatched.append(name)
    return GroundingResult(assignment=assignment, unmatched=tuple(unmatched))


@dataclass(frozen=True)
class _PreparedSample:
    name: str
    prims: PrimitiveSet
    grounding: GroundingResult
    gold_features: NDArray[np.float64] | None  # None when not trainable


def _prepare(model: InterpretationModel, samples: list[GlyphSample],
             params: ExtractionParams) -> list[_PreparedSample]:
    prepared = []
    for s in samples:
        prims = extract_all(s.image, params)
        grounding = ground_gold(s.gold, prims)
        required_missing = any(
            grounding.assignment.get(c.name) is None and not c.optional
            for c in model.components)
        feats = None
        if not required_missing:
            feats = model.feature_vector(grounding.assignment, prims.source_dims)
        prepared.append(_PreparedSample(name=s.name, prims=prims,
                                        grounding=grounding, gold_features=feats))
    return prepared


def _predict(model: InterpretationModel, prims: PrimitiveSet, *, k: int,
             beam_width: int, exact_limit: int,
             value_cache: dict | None = None) -> Interpretation:
    table = build_candidates(model, prims, k=k, value_cache=value_cache)
    tables = build_score_tables(model, table, prims.source_dims, value_cache=value_cache)
    if table.product_size <= exact_limit:
        return interpret_exact(model, table, prims.source_dims,
                               exact_limit=exact_limit, tables=tables)
    return interpret_beam(model, table, prims.source_dims, beam_width=beam_width,
                          exact_limit=exact_limit, tables=tables)


@dataclass(frozen=True)
class TrainResult:
    model: InterpretationModel
    epochs_run: int
    mistakes_per_epoch: tuple[int, ...]
    samples_used: int
    skipped: tuple[tuple[str, tuple[str, ...]], ...]  # (name, unmatched comps)


def train_structured(model: InterpretationModel, samples: list[GlyphSample], *,
                     epochs: int = 20, averaging: bool = True,
                     learning_rate: float = 1.0, k: int = DEFAULT_K,
                     beam_width: int = TRAIN_BEAM_WIDTH,
                     exact_limit: int = DEFAULT_EXACT_LIMIT,
                     extraction: ExtractionParams | None = None) -> TrainResult:
    """Structured perceptron on the positive samples, in their given order.

    Weights start at zero. On each mistake (predicted feature vector differs
    from gold's) the weights move by learning_rate * (gold - predicted).
    With averaging=True the returned model carries the running average of
    the weight vector over all updates. Stops early after a mistake-free
    epoch. Samples whose required components cannot be grounded are skipped
    and reported.
    """
    params = extraction or ExtractionParams()
    positives = [s for s in samples if s.is_positive]
    prepared = _prepare(model, positives, params)
    usable = [p for p in prepared if p.gold_features is not None]
    skipped = tuple((p.name, p.grounding.unmatched)
                    for p in prepared if p.gold_features is None)
    caches: list[dict] = [{} for _ in usable]

    w = np.zeros(model.feature_dim, dtype=np.float64)
    w_sum = np.zeros_like(w)
    n_updates = 0
    mistakes_per_epoch: list[int] = []
    for _epoch in range(epochs):
        mistakes = 0
        current = model.with_weights(w)
        for p, cache in zip(usable, caches):
            pred = _predict(current, p.prims, k=k, beam_width=beam_width,
                            exact_limit=exact_limit, value_cache=cache)
            if not np.array_equal(p.gold_features, pred.feature_vector):
                w = w + learning_rate * (p.gold_features - pred.feature_vector)
                w_sum += w
                n_updates += 1
                mistakes += 1
                current = model.with_weights(w)
        mistakes_per_epoch.append(mistakes)
        if mistakes == 0:
            break
    final_w = (w_sum / n_updates) if (averaging and n_updates > 0) else w
    return TrainResult(model=model.with_weights(final_w),
                       epochs_run=len(mistakes_per_epoch),
                       mistakes_per_epoch=tuple(mistakes_per_epoch),
                       samples_used=len(usable), skipped=skipped)


def score_samples(model: InterpretationModel, samples: list[GlyphSample], *,
                  k: int = DEFAULT_K, beam_width: int = TRAIN_BEAM_WIDTH,
                  exact_limit: int = DEFAULT_EXACT_LIMIT,
                  extraction: ExtractionParams | None = None,
                  ) -> list[tuple[GlyphSample, Interpretation | None]]:
    """Best interpretation per sample; None when uninterpretable."""
    params = extraction or ExtractionParams()
    out = []
    for s in samples:
        prims = extract_all(s.image, params)
        try:
            interp = _predict(model, prims, k=k, beam_width=beam_width,
                              exact_limit=exact_limit)
        except (UninterpretableError, ExactLimitError):
            interp = None
        out.append((s, interp))
    return out


def calibrate_threshold(model: InterpretationModel, samples: list[GlyphSample],
                        **score_kw) -> InterpretationModel:
    """Classification threshold = midpoint of the class-conditional mean
    scores. Uninterpretable samples are excluded from their class mean."""
    pos_scores, neg_scores = [], []
    for s, interp in score_samples(model, samples, **score_kw):
        if interp is None:
            continue
        (pos_scores if s.is_positive else neg_scores).append(interp.score)
    if not pos_scores or not neg_scores:
        raise ValueError("threshold calibration needs scored samples of both classes")
    thr = (sum(pos_scores) / len(pos_scores) + sum(neg_scores) / len(neg_scores)) / 2.0
    return model.with_weights(model.weights, score_threshold=thr)


def classification_accuracy(model: InterpretationModel, samples: list[GlyphSample],
                            **score_kw) -> float:
    """Fraction of samples classified correctly by score > threshold
    (uninterpretable samples predict negative)."""
    if model.score_threshold is None:
        raise ValueError("model has no calibrated score threshold")
    correct = 0
    for s, interp in score_samples(model, samples, **score_kw):
        predicted_positive = interp is not None and interp.score > model.score_threshold
        correct += int(predicted_positive == s.is_positive)
    return correct / len(samples) if samples else 0.0


def interpretation_jaccard(model: InterpretationModel, samples: list[GlyphSample],
                           **score_kw) -> float:
    """Mean (over positive samples) of the mean per-component Jaccard
    against gold geometry; uninterpretable samples count 0."""
    positives = [s for s in samples if s.is_positive]
    vals = []
    for s, interp in score_samples(model, positives, **score_kw):
        if interp is None:
            vals.append(0.0)
            continue
        dims = (s.image.width, s.image.height)
        vals.append(jaccard_correspondence(interp.assignment, s.gold, dims).mean_jaccard)
    return sum(vals) / len(vals) if vals else 0.0


@dataclass(frozen=True)
class AblationRow:
    relation: str
    metric: str
    baseline: float
    ablated: float

    @property
    def delta(self) -> float:
        return self.baseline - self.ablated


@dataclass(frozen=True)
class AblationReport:
    relation_index: int
    relation: str
    rows: tuple[AblationRow, ...]


def relation_label(model: InterpretationModel, index: int) -> str:
    rel = model.relations[index]
    return f"{rel.relation_kind}({','.join(rel.operands)})"


def ablate_feature(model: InterpretationModel, eval_set: list[GlyphSample],
                   relation_index: int, **score_kw) -> AblationReport:
    """Zero one relation's weight block (no retraining) and re-evaluate.

    The calibrated threshold stays fixed, so the deltas measure how much the
    classifier leans on that relation.
    """
    if not 0 <= relation_index < len(model.relations):
        raise IndexError(f"relation index {relation_index} out of range")
    w = np.array(model.weights, dtype=np.float64)
    w[model.block_slices[relation_index]] = 0.0
    ablated = model.with_weights(w)
    label = relation_label(model, relation_index)
    rows = []
    for metric, fn in (("classification_accuracy", classification_accuracy),
                       ("interpretation_jaccard", interpretation_jaccard)):
        rows.append(AblationRow(relation=label, metric=metric,
                                baseline=fn(model, eval_set, **score_kw),
                                ablated=fn(ablated, eval_set, **score_kw)))
    return AblationReport(relation_index=relation_index, relation=label,
                          rows=tuple(rows))


def ablation_csv(reports: list[AblationReport]) -> str:
    lines = ["relation,metric,baseline,ablated,delta"]
    for rep in reports:
        for row in rep.rows:
            lines.append(f"{row.relation},{row.metric},{row.baseline:.6f},"
                         f"{row.ablated:.6f},{row.delta:.6f}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RecognitionDrop:
    """Score change between an image and one of its reduction descendants.

    Scores are -inf with the matching flag set when a side has no valid
    interpretation; attribution holds, per relation, the summed block of
    feature_delta = features(minimal) - features(subminimal).
    """

    score_minimal: float
    score_subminimal: float
    minimal_uninterpretable: bool
    subminimal_uninterpretable: bool
    drop: float | None
    feature_delta: NDArray[np.float64] | None = field(repr=False, default=None)
    attribution: tuple[tuple[str, float], ...] | None = None


def recognition_drop(model: InterpretationModel, minimal_image, subminimal_image, *,
                     k: int = DEFAULT_K, beam_width: int = TRAIN_BEAM_WIDTH,
                     exact_limit: int = DEFAULT_EXACT_LIMIT,
                     extraction: ExtractionParams | None = None) -> RecognitionDrop:
    params = extraction or ExtractionParams()

    def side(image) -> Interpretation | None:
        prims = extract_all(image, params)
        try:
            return _predict(model, prims, k=k, beam_width=beam_width,
                            exact_limit=exact_limit)
        except (UninterpretableError, ExactLimitError):
            return None

    a, b = side(minimal_image), side(subminimal_image)
    score_a = a.score if a is not None else -math.inf
    score_b = b.score if b is not None else -math.inf
    if a is None or b is None:
        return RecognitionDrop(score_minimal=score_a, score_subminimal=score_b,
                               minimal_uninterpretable=a is None,
                               subminimal_uninterpretable=b is None, drop=None)
    delta = a.feature_vector - b.feature_vector
    attribution = tuple(
        (relation_label(model, i), float(delta[sl].sum()))
        for i, sl in enumerate(model.block_slices))
    return RecognitionDrop(score_minimal=score_a, score_subminimal=score_b,
                           minimal_uninterpretable=False,
                           subminimal_uninterpretable=False,
                           drop=score_a - score_b, feature_delta=delta,
                           attribution=attribution)
