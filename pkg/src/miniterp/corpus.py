"""On-disk corpus layout: images, gold annotations, and the manifest.

A corpus directory holds one PGM per sample, one gold JSON per sample, and
a single ``manifest.json`` listing them. Gold annotations reuse the
primitive types directly so grounding and evaluation share one vocabulary.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .model import Assignment
from .primitives import Contour, PointFeature, PointKind, Primitive, Region
from .raster import Image, load_pgm, save_pgm

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class GlyphSample:
    """One corpus sample: image, gold component geometry, class label."""

    name: str
    image: Image
    gold: Assignment
    label: str  # "positive" | "negative"
    seed: int | None = None
    placement: dict[str, Any] | None = field(default=None)

    @property
    def is_positive(self) -> bool:
        return self.label == "positive"


def _gold_entry(p: Primitive | None) -> Any:
    if p is None:
        return None
    if isinstance(p, Region):
        return {"kind": "region", "pixels": p.pixels.tolist(),
                "mean_intensity": p.mean_intensity}
    if isinstance(p, Contour):
        return {"kind": "contour", "points": [[float(x), float(y)] for x, y in p.points],
                "closed": p.closed}
    if isinstance(p, PointFeature):
        return {"kind": "point", "position": [float(p.position[0]), float(p.position[1])],
                "point_kind": p.kind.value}
    raise TypeError(f"not a primitive: {type(p)!r}")


def _gold_parse(entry: Any) -> Primitive | None:
    if entry is None:
        return None
    kind = entry["kind"]
    if kind == "region":
        return Region(pixels=np.asarray(entry["pixels"], dtype=np.int64),
                      mean_intensity=float(entry.get("mean_intensity", 0.0)))
    if kind == "contour":
        return Contour(points=np.asarray(entry["points"], dtype=np.float64),
                       mean_strength=0.0, closed=bool(entry.get("closed", False)))
    if kind == "point":
        x, y = entry["position"]
        return PointFeature(position=(float(x), float(y)),
                            kind=PointKind(entry.get("point_kind", "gradient-peak")),
                            strength=0.0)
    raise ValueError(f"unknown gold kind: {kind!r}")


def gold_to_json(label: str, gold: Assignment) -> str:
    doc = {"label": label,
           "components": {name: _gold_entry(p) for name, p in gold.items()}}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def gold_from_json(text: str) -> tuple[str, dict[str, Primitive | None]]:
    doc = json.loads(text)
    comps = {name: _gold_parse(entry) for name, entry in doc["components"].items()}
    return str(doc["label"]), comps


def write_corpus(directory: str, samples: list[GlyphSample]) -> str:
    """Write images + gold files + manifest; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for s in samples:
        img_name = f"{s.name}.pgm"
        gold_name = f"{s.name}.gold.json"
        save_pgm(s.image, os.path.join(directory, img_name))
        with open(os.path.join(directory, gold_name), "w", encoding="ascii") as fh:
            fh.write(gold_to_json(s.label, dict(s.gold)))
        entry: dict[str, Any] = {"image": img_name, "gold": gold_name,
                                 "label": s.label, "name": s.name}
        if s.seed is not None:
            entry["seed"] = s.seed
        entries.append(entry)
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    with open(manifest_path, "w", encoding="ascii") as fh:
        json.dump({"samples": entries}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load_corpus(manifest_path: str) -> list[GlyphSample]:
    """Load every sample listed by a manifest (paths relative to it)."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path, encoding="ascii") as fh:
        doc = json.load(fh)
    samples = []
    for entry in doc["samples"]:
        image = load_pgm(os.path.join(base, entry["image"]))
        with open(os.path.join(base, entry["gold"]), encoding="ascii") as fh:
            label, gold = gold_from_json(fh.read())
        if "label" in entry and entry["label"] != label:
            raise ValueError(f"label mismatch for {entry['image']}: "
                             f"manifest says {entry['label']!r}, gold file says {label!r}")
        samples.append(GlyphSample(name=entry.get("name", os.path.splitext(entry["image"])[0]),
                                   image=image, gold=gold, label=label,
                                   seed=entry.get("seed")))
    return samples


SCENES_MANIFEST_NAME = "scenes.json"


def write_scenes(directory: str, scenes) -> str:
    """Write scene images + planted-glyph annotations + a manifest;
    returns the manifest path. Scenes come from the generator."""
    os.makedirs(directory, exist_ok=True)
    names = []
    for sc in scenes:
        save_pgm(sc.image, os.path.join(directory, f"{sc.name}.pgm"))
        planted = []
        for pg in sc.planted:
            planted.append({
                "box": list(pg.box),
                "label": pg.label,
                "components": {name: _gold_entry(p)
                               for name, p in pg.gold.items()},
            })
        doc = {"name": sc.name, "seed": sc.seed, "planted": planted}
        with open(os.path.join(directory, f"{sc.name}.scene.json"),
                  "w", encoding="ascii") as fh:
            json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
        names.append(sc.name)
    manifest_path = os.path.join(directory, SCENES_MANIFEST_NAME)
    with open(manifest_path, "w", encoding="ascii") as fh:
        json.dump({"scenes": names}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load_scenes(manifest_path: str):
    """Load every scene listed by a scenes manifest."""
    from .synthgen import PlantedGlyph, SceneSample  # deferred: avoids cycle

    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path, encoding="ascii") as fh:
        doc = json.load(fh)
    scenes = []
    for name in doc["scenes"]:
        image = load_pgm(os.path.join(base, f"{name}.pgm"))
        with open(os.path.join(base, f"{name}.scene.json"),
                  encoding="ascii") as fh:
            sdoc = json.load(fh)
        planted = tuple(
            PlantedGlyph(box=tuple(entry["box"]), label=entry["label"],
                         gold={n: _gold_parse(e)
                               for n, e in entry["components"].items()})
            for entry in sdoc["planted"])
        scenes.append(SceneSample(name=sdoc["name"], image=image,
                                  planted=planted, seed=sdoc["seed"]))
    return scenes
