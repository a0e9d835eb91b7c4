"""Structured interpretation of small images.

The pipeline: extract primitives (contours, points, regions) from a
grayscale image, assign them to the components of a relational model by
maximizing a learned linear score over pairwise relations, and read the
assignment as the image's interpretation. Around that core: image
reduction to smaller descendants, structured perceptron training,
Jaccard evaluation against gold geometry, relation ablations, window
scanning of larger images, and a deterministic synthetic corpus
generator.
"""

from .model import (
    Assignment,
    ComponentSpec,
    Interpretation,
    InterpretationModel,
    InvalidModelError,
    RelationSpec,
    load_model,
    model_from_json,
    save_model,
    validate_model,
)
from .primitives import (
    Contour,
    ExtractionParams,
    PointFeature,
    PrimitiveSet,
    Region,
    extract_all,
)
from .raster import (
    Image,
    ReductionExhaustedError,
    ReductionStep,
    StepKind,
    descendants,
    load_pgm,
    reduce,
    save_pgm,
)
from .search import (
    CandidateTable,
    ExactLimitError,
    UninterpretableError,
    build_candidates,
    interpret_auto,
    interpret_beam,
    interpret_exact,
)

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "CandidateTable",
    "ComponentSpec",
    "Contour",
    "ExactLimitError",
    "ExtractionParams",
    "Image",
    "Interpretation",
    "InterpretationModel",
    "InvalidModelError",
    "PointFeature",
    "PrimitiveSet",
    "ReductionExhaustedError",
    "ReductionStep",
    "Region",
    "RelationSpec",
    "StepKind",
    "UninterpretableError",
    "build_candidates",
    "descendants",
    "extract_all",
    "interpret_auto",
    "interpret_beam",
    "interpret_exact",
    "load_model",
    "load_pgm",
    "model_from_json",
    "reduce",
    "save_model",
    "save_pgm",
    "validate_model",
    "__version__",
]
