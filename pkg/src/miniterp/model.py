"""Interpretation models: named component slots, relation specs, learned
weights, and linear scoring of assignments.

Score definition (canonical): for each relation in model order, the dot
product of its weight block with its relation value, summed sequentially;
then each nulled optional component's penalty subtracted in component order.
Every scorer in the package reproduces this exact floating-point op sequence,
so Interpretation.score is always bit-equal to a recomputation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np
from numpy.typing import NDArray

from .primitives import Primitive, primitive_kind
from .relations import RELATION_KINDS, evaluate

FORMAT_VERSION = 1

KINDS = ("point", "contour", "region")


class InvalidModelError(ValueError):
    """Raised when a model file fails structural validation."""

    def __init__(self, defects: list[str]):
        super().__init__("invalid model: " + "; ".join(defects))
        self.defects = list(defects)


@dataclass(frozen=True)
class ComponentSpec:
    name: str
    kind: str  # "point" | "contour" | "region"
    optional: bool = False


@dataclass(frozen=True)
class RelationSpec:
    relation_kind: str
    operands: tuple[str, ...]
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "operands", tuple(self.operands))
        object.__setattr__(self, "params", dict(self.params))

    @property
    def dim(self) -> int:
        return RELATION_KINDS[self.relation_kind].dim


Assignment = Mapping[str, Primitive | None]


@dataclass(frozen=True, eq=False)
class Interpretation:
    assignment: dict[str, Primitive | None]
    score: float
    feature_vector: NDArray[np.float64] = field(repr=False)

    def __post_init__(self):
        fv = np.ascontiguousarray(np.asarray(self.feature_vector, dtype=np.float64))
        fv.setflags(write=False)
        object.__setattr__(self, "feature_vector", fv)
        object.__setattr__(self, "assignment", dict(self.assignment))


@dataclass(frozen=True, eq=False)
class InterpretationModel:
    class_label: str
    components: tuple[ComponentSpec, ...]
    relations: tuple[RelationSpec, ...]
    weights: NDArray[np.float64] = field(repr=False)
    null_penalties: Mapping[str, float] = field(default_factory=dict)
    score_threshold: float | None = None

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "relations", tuple(self.relations))
        object.__setattr__(self, "null_penalties", dict(self.null_penalties))

    # --- structure ------------------------------------------------------

    @cached_property
    def component_by_name(self) -> dict[str, ComponentSpec]:
        return {c.name: c for c in self.components}

    @cached_property
    def feature_dim(self) -> int:
        return sum(r.dim for r in self.relations)

    @cached_property
    def block_slices(self) -> tuple[slice, ...]:
        """weights[slice] for each relation, in model order."""
        out = []
        off = 0
        for r in self.relations:
            out.append(slice(off, off + r.dim))
            off += r.dim
        return tuple(out)

    def penalty(self, component_name: str) -> float:
        return float(self.null_penalties.get(component_name, 0.0))

    def with_weights(self, weights: NDArray[np.float64],
                     score_threshold: float | None = None) -> "InterpretationModel":
        return InterpretationModel(
            class_label=self.class_label,
            components=self.components,
            relations=self.relations,
            weights=weights,
            null_penalties=self.null_penalties,
            score_threshold=self.score_threshold if score_threshold is None else score_threshold,
        )

    # --- scoring ----------------------------------------------------------

    def _check_assignment(self, assignment: Assignment) -> None:
        for comp in self.components:
            if comp.name not in assignment:
                raise KeyError(f"assignment missing component {comp.name!r}")
            p = assignment[comp.name]
            if p is None:
                if not comp.optional:
                    raise ValueError(f"required component {comp.name!r} assigned null")
            elif primitive_kind(p) != comp.kind:
                raise ValueError(
                    f"component {comp.name!r} expects kind {comp.kind!r}, "
                    f"got {primitive_kind(p)!r}"
                )
        for name in assignment:
            if name not in self.component_by_name:
                raise KeyError(f"unknown component name {name!r}")

    def feature_vector(self, assignment: Assignment,
                       source_dims: tuple[int, int]) -> NDArray[np.float64]:
        """Concatenation of relation values in model order; null operands
        yield zero blocks."""
        self._check_assignment(assignment)
        blocks = [
            evaluate(
                r.relation_kind,
                tuple(assignment[name] for name in r.operands),
                r.params,
                source_dims,
            )
            for r in self.relations
        ]
        return np.concatenate(blocks) if blocks else np.zeros(0)

    def score(self, assignment: Assignment,
              source_dims: tuple[int, int]) -> Interpretation:
        """Score an assignment; see the module docstring for the canonical
        floating-point accumulation order."""
        fv = self.feature_vector(assignment, source_dims)
        total = 0.0
        for sl in self.block_slices:
            total += float(np.dot(self.weights[sl], fv[sl]))
        for comp in self.components:
            if comp.optional and assignment[comp.name] is None:
                total -= self.penalty(comp.name)
        return Interpretation(assignment=dict(assignment), score=total, feature_vector=fv)

    # --- serialization ----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "class_label": self.class_label,
            "components": [
                {"name": c.name, "kind": c.kind, "optional": c.optional}
                for c in self.components
            ],
            "relations": [
                {
                    "kind": r.relation_kind,
                    "operands": list(r.operands),
                    "params": {k: float(v) for k, v in sorted(r.params.items())},
                }
                for r in self.relations
            ],
            "weights": [float(w) for w in self.weights],
            "null_penalties": {k: float(v) for k, v in sorted(self.null_penalties.items())},
            "score_threshold": None if self.score_threshold is None else float(self.score_threshold),
        }
        return json.dumps(doc, indent=1, sort_keys=True)


_TOP_KEYS = {
    "format_version", "class_label", "components", "relations",
    "weights", "null_penalties", "score_threshold",
}


def model_from_json(text: str) -> InterpretationModel:
    """Parse and validate; raises InvalidModelError on any defect."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidModelError([f"not valid JSON: {e}"]) from e
    if not isinstance(doc, dict):
        raise InvalidModelError(["top level must be an object"])
    defects = [f"unknown key {k!r}" for k in sorted(set(doc) - _TOP_KEYS)]
    if doc.get("format_version") != FORMAT_VERSION:
        defects.append(f"unsupported format_version {doc.get('format_version')!r}")
    if defects:
        raise InvalidModelError(defects)
    try:
        model = InterpretationModel(
            class_label=str(doc["class_label"]),
            components=tuple(
                ComponentSpec(str(c["name"]), str(c["kind"]), bool(c["optional"]))
                for c in doc["components"]
            ),
            relations=tuple(
                RelationSpec(
                    str(r["kind"]),
                    tuple(str(o) for o in r["operands"]),
                    {str(k): float(v) for k, v in r.get("params", {}).items()},
                )
                for r in doc["relations"]
            ),
            weights=np.array([float(w) for w in doc["weights"]], dtype=np.float64),
            null_penalties={str(k): float(v) for k, v in doc.get("null_penalties", {}).items()},
            score_threshold=(None if doc.get("score_threshold") is None
                             else float(doc["score_threshold"])),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidModelError([f"malformed field: {e}"]) from e
    defects = validate_model(model)
    if defects:
        raise InvalidModelError(defects)
    return model


def load_model(path: str) -> InterpretationModel:
    with open(path, "r", encoding="utf-8") as f:
        return model_from_json(f.read())


def save_model(model: InterpretationModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(model.to_json())
        f.write("\n")


def validate_model(model: InterpretationModel) -> list[str]:
    """Check every structural invariant; returns all violations (empty = ok)."""
    defects: list[str] = []
    seen: set[str] = set()
    for c in model.components:
        if c.name in seen:
            defects.append(f"duplicate component name {c.name!r}")
        seen.add(c.name)
        if c.kind not in KINDS:
            defects.append(f"component {c.name!r} has unknown kind {c.kind!r}")

    referenced: set[str] = set()
    for i, r in enumerate(model.relations):
        kind = RELATION_KINDS.get(r.relation_kind)
        if kind is None:
            defects.append(f"relation {i}: unknown kind {r.relation_kind!r}")
            continue
        if len(r.operands) != kind.arity:
            defects.append(
                f"relation {i} ({r.relation_kind}): expects {kind.arity} operand(s), "
                f"got {len(r.operands)}"
            )
            continue
        if kind.arity == 2 and r.operands[0] == r.operands[1]:
            defects.append(f"relation {i} ({r.relation_kind}): operands must be distinct")
        for slot, name in enumerate(r.operands):
            comp = model.component_by_name.get(name)
            if comp is None:
                defects.append(f"relation {i} ({r.relation_kind}): unknown operand {name!r}")
                continue
            referenced.add(name)
            want = kind.operand_kinds[slot]
            if want is not None and comp.kind != want:
                defects.append(
                    f"relation {i} ({r.relation_kind}): operand {name!r} must be a "
                    f"{want}, is a {comp.kind}"
                )

    for c in model.components:
        if c.name not in referenced:
            defects.append(f"component {c.name!r} not referenced by any relation")

    want_dim = sum(
        RELATION_KINDS[r.relation_kind].dim
        for r in model.relations
        if r.relation_kind in RELATION_KINDS
    )
    if model.weights.ndim != 1 or (
        all(r.relation_kind in RELATION_KINDS for r in model.relations)
        and model.weights.shape[0] != want_dim
    ):
        defects.append(
            f"weight dimension mismatch: model needs {want_dim}, got {model.weights.shape}"
        )

    for name in model.null_penalties:
        comp = model.component_by_name.get(name)
        if comp is None:
            defects.append(f"null penalty for unknown component {name!r}")
        elif not comp.optional:
            defects.append(f"null penalty for non-optional component {name!r}")
    return defects


def feature_vector(model: InterpretationModel, assignment: Assignment,
                   source_dims: tuple[int, int]) -> NDArray[np.float64]:
    return model.feature_vector(assignment, source_dims)


def score(model: InterpretationModel, assignment: Assignment,
          source_dims: tuple[int, int]) -> Interpretation:
    return model.score(assignment, source_dims)
