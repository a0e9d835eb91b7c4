"""Built-in model structures.

The reference "hug" model fits the synthetic interaction glyphs: two
torso blobs, a two-segment arm stroke ending in a palm blob, a contour
along the far side of the touched torso, and optional face marks. The
defining relation is palm-touches-torso-2; the remaining relations pin
down layout, shape, and arm geometry so that training can separate the
components. One torso-existence feature is deliberately saturated
(strength_scale far below any real region's strength) so its value is
constant across the corpus — a known-inert probe for ablation studies.
"""

from __future__ import annotations

import numpy as np

from .model import ComponentSpec, InterpretationModel, RelationSpec

HUG_COMPONENTS = (
    ComponentSpec("torso-region-1", "region"),
    ComponentSpec("torso-region-2", "region"),
    ComponentSpec("palm-region", "region"),
    ComponentSpec("back-contour", "contour"),
    ComponentSpec("arm-contour-1", "contour"),
    ComponentSpec("arm-contour-2", "contour"),
    ComponentSpec("face-region-1", "region", optional=True),
    ComponentSpec("face-region-2", "region", optional=True),
)

HUG_RELATIONS = (
    RelationSpec("exists", ("arm-contour-1",), {"strength_scale": 50.0}),
    RelationSpec("exists", ("arm-contour-2",), {"strength_scale": 50.0}),
    RelationSpec("touch", ("palm-region", "torso-region-2"), {"tol": 2.0}),
    RelationSpec("relpos", ("palm-region", "torso-region-2")),
    RelationSpec("bounds", ("back-contour", "torso-region-2")),
    RelationSpec("continuity", ("arm-contour-1", "arm-contour-2"),
                 {"tol": 2.0}),
    RelationSpec("shape", ("palm-region",)),
    # saturated probe: any region of a few pixels already reaches 1.0
    RelationSpec("exists", ("torso-region-1",), {"strength_scale": 0.005}),
    RelationSpec("relpos", ("torso-region-1", "torso-region-2")),
    RelationSpec("shape", ("torso-region-2",)),
    RelationSpec("shape", ("torso-region-1",)),
    RelationSpec("relpos", ("arm-contour-1", "arm-contour-2")),
    RelationSpec("touch", ("face-region-1", "torso-region-1"), {"tol": 2.0}),
    RelationSpec("shape", ("face-region-1",)),
    RelationSpec("touch", ("face-region-2", "torso-region-2"), {"tol": 2.0}),
    RelationSpec("exists", ("back-contour",), {"strength_scale": 50.0}),
    RelationSpec("exists", ("palm-region",), {"strength_scale": 0.02}),
    # flank selectors: each straight arm segment sheds two parallel edge
    # chains that agree on every other relation; their distance to torso-2
    # (inner flank runs ~3 px closer than outer) is the one signal that
    # tells the twins apart, so training can commit to a flank. Distance
    # to torso-1 separates the rise from the face dot's rim and from
    # fragments of torso-1's own rim, which sit at or inside that rim.
    RelationSpec("touch", ("arm-contour-1", "torso-region-2"), {"tol": 3.5}),
    RelationSpec("touch", ("arm-contour-2", "torso-region-2"), {"tol": 3.5}),
    RelationSpec("touch", ("arm-contour-1", "torso-region-1"), {"tol": 3.5}),
    RelationSpec("touch", ("arm-contour-2", "torso-region-1"), {"tol": 3.5}),
)


def hug_model() -> InterpretationModel:
    """The untrained reference structure: zero weights, no threshold."""
    dim = sum(r.dim for r in HUG_RELATIONS)
    return InterpretationModel(
        class_label="hug",
        components=HUG_COMPONENTS,
        relations=HUG_RELATIONS,
        weights=np.zeros(dim),
        null_penalties={},
        score_threshold=None,
    )


REFERENCE_MODELS = {"hug": hug_model}


def reference_model(name: str) -> InterpretationModel:
    try:
        factory = REFERENCE_MODELS[name]
    except KeyError:
        raise KeyError(
            f"unknown reference model {name!r}; "
            f"available: {', '.join(sorted(REFERENCE_MODELS))}") from None
    return factory()
