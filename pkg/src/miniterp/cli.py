"""Command-line surface binding the library modules.

Seven subcommands: interpret one image, train a model on a corpus,
evaluate against gold, run relation ablations, write an image's reduced
descendants, scan a larger image, and generate a synthetic corpus. All
commands accept --config / --out-dir / --seed; every flag's default is
stated in its help text. Given identical inputs and flags, every command
writes byte-identical outputs.

Exit codes: 0 success, 2 uninterpretable region, 3 I/O error,
4 invalid model.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, apply_overrides, load_config
from .corpus import (
    _gold_entry,
    load_corpus,
    write_corpus,
    write_scenes,
)
from .evaluation import eval_csv, jaccard_correspondence
from .learning import (
    ablate_feature,
    ablation_csv,
    calibrate_threshold,
    train_structured,
)
from .model import InvalidModelError, load_model, save_model
from .primitives import extract_all
from .raster import (
    PgmError,
    ReductionExhaustedError,
    descendants,
    load_pgm,
    save_pgm,
)
from .scan import combine, refine_all, scan
from .search import (
    ExactLimitError,
    UninterpretableError,
    build_candidates,
    interpret_beam,
)
from .synthgen import GenerationError, generate_scene, make_corpus
from .zoo import REFERENCE_MODELS, reference_model

EXIT_OK = 0
EXIT_UNINTERPRETABLE = 2
EXIT_IO = 3
EXIT_INVALID_MODEL = 4

_DEFAULTS = RunConfig()
_CONFIG_KEYS = {f.name for f in dataclasses.fields(RunConfig)}


def _parse_scales(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"scales must be comma-separated numbers, got {text!r}")


def _knob(parser: argparse.ArgumentParser, key: str, help_text: str) -> None:
    """A flag mirroring one RunConfig key; unset flags leave the config
    (file or defaults) untouched."""
    default = getattr(_DEFAULTS, key)
    flag = "--" + key.replace("_", "-")
    if isinstance(default, bool):
        parser.add_argument(flag, dest=key, default=None,
                            action=argparse.BooleanOptionalAction,
                            help=f"{help_text} (default: {default})")
    elif key == "scales":
        parser.add_argument(flag, dest=key, default=None, type=_parse_scales,
                            metavar="S1,S2,...",
                            help=f"{help_text} (default: "
                                 f"{','.join(str(s) for s in default)})")
    else:
        typ = int if isinstance(default, int) else float
        parser.add_argument(flag, dest=key, default=None, type=typ,
                            metavar="N" if typ is int else "X",
                            help=f"{help_text} (default: {default})")


def _extraction_knobs(parser: argparse.ArgumentParser) -> None:
    _knob(parser, "mag_threshold", "gradient magnitude floor for edges")
    _knob(parser, "min_contour_length", "minimum contour arc length kept")
    _knob(parser, "blob_threshold", "blob response floor for peak points")
    _knob(parser, "num_levels", "intensity quantization levels for regions")
    _knob(parser, "min_region_area", "minimum region area in pixels")


def _search_knobs(parser: argparse.ArgumentParser) -> None:
    _knob(parser, "candidates", "candidates kept per component")
    _knob(parser, "beam_width", "beam width for interpretation")
    _knob(parser, "exact_limit", "max assignment product for exact search")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="miniterp",
        description="Structured interpretation of small images: extract "
                    "primitives, assign them to model components, train, "
                    "evaluate, and scan.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None,
                        help="JSON config file; flags override its keys "
                             "(default: built-in defaults)")
    common.add_argument("--out-dir", metavar="DIR", default="out",
                        help="directory for output files (default: out)")
    common.add_argument("--seed", type=int, default=7, metavar="N",
                        help="seed for all randomized steps (default: 7)")

    p = sub.add_parser("interpret", parents=[common],
                       help="assign one image's primitives to a model")
    p.add_argument("image", help="input PGM image")
    p.add_argument("--model", required=True, metavar="PATH",
                   help="model JSON file (required)")
    p.add_argument("--render", action="store_true",
                   help="also write an SVG overlay (default: off)")
    _search_knobs(p)
    _extraction_knobs(p)
    p.set_defaults(func=cmd_interpret)

    p = sub.add_parser("train", parents=[common],
                       help="train on a corpus and calibrate a threshold")
    p.add_argument("--corpus", required=True, metavar="MANIFEST",
                   help="corpus manifest JSON (required)")
    p.add_argument("--model", default=None, metavar="PATH",
                   help="starting model structure; weights are relearned "
                        "(default: built-in reference structure)")
    p.add_argument("--class", dest="class_label", default="hug",
                   choices=sorted(REFERENCE_MODELS),
                   help="built-in structure to start from (default: hug)")
    _knob(p, "epochs", "maximum training epochs")
    _knob(p, "learning_rate", "perceptron update step size")
    _knob(p, "averaging", "average weights over updates")
    _knob(p, "train_beam_width", "beam width during training")
    _knob(p, "candidates", "candidates kept per component")
    _knob(p, "exact_limit", "max assignment product for exact search")
    _extraction_knobs(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common],
                       help="evaluate a model against a corpus's gold")
    p.add_argument("--corpus", required=True, metavar="MANIFEST",
                   help="corpus manifest JSON (required)")
    p.add_argument("--model", required=True, metavar="PATH",
                   help="model JSON file (required)")
    p.add_argument("--render", action="store_true",
                   help="write one overlay SVG per sample (default: off)")
    _search_knobs(p)
    _extraction_knobs(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common],
                       help="zero relations one at a time and re-measure")
    p.add_argument("--corpus", required=True, metavar="MANIFEST",
                   help="corpus manifest JSON (required)")
    p.add_argument("--model", required=True, metavar="PATH",
                   help="model JSON file (required)")
    p.add_argument("--relation", type=int, action="append", default=None,
                   metavar="IDX",
                   help="relation index to ablate; repeatable "
                        "(default: every relation)")
    _search_knobs(p)
    _extraction_knobs(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("reduce", parents=[common],
                       help="write an image's five reduced descendants")
    p.add_argument("image", help="input PGM image")
    _knob(p, "factor", "reduction factor per step")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("scan", parents=[common],
                       help="detect model configurations in a larger image")
    p.add_argument("image", help="input PGM image")
    p.add_argument("--model", required=True, action="append", metavar="PATH",
                   help="model JSON file; repeatable (required)")
    p.add_argument("--render", action="store_true",
                   help="also write an SVG claim overlay (default: off)")
    _knob(p, "window", "scan window edge length in pixels")
    _knob(p, "stride", "window stride in pixels")
    _knob(p, "scales", "resampling scales applied to the full image")
    _knob(p, "scan_beam_width", "beam width per window")
    _knob(p, "nms_iou", "suppression IoU for overlapping windows")
    _knob(p, "merge_iou", "claim merge IoU when combining")
    _knob(p, "refine", "re-score detections at full resolution")
    _knob(p, "candidates", "candidates kept per component")
    _knob(p, "exact_limit", "max assignment product for exact search")
    _extraction_knobs(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("gen", parents=[common],
                       help="generate a synthetic glyph corpus")
    p.add_argument("--n", type=int, default=200, metavar="N",
                   help="number of positive glyphs (default: 200)")
    p.add_argument("--negatives", type=int, default=None, metavar="N",
                   help="number of negative glyphs (default: same as --n)")
    p.add_argument("--scenes", type=int, default=0, metavar="N",
                   help="number of larger scenes to plant (default: 0)")
    _knob(p, "glyph_dim", "glyph image edge length")
    _knob(p, "scene_dim", "scene image edge length")
    _knob(p, "n_glyphs", "glyphs planted per scene")
    _knob(p, "noise_sigma", "additive noise level in gray levels")
    p.set_defaults(func=cmd_gen)

    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k) for k in _CONFIG_KEYS
                 if hasattr(args, k)}
    return apply_overrides(cfg, overrides)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _search_kwargs(cfg: RunConfig) -> dict:
    return {"k": cfg.candidates, "beam_width": cfg.beam_width,
            "exact_limit": cfg.exact_limit,
            "extraction": cfg.extraction_params()}


def _assignment_doc(assignment) -> dict:
    return {name: _gold_entry(p) for name, p in assignment.items()}


def _dump_json(doc, path: Path) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n",
                    encoding="ascii")


# --- commands ---------------------------------------------------------------


def cmd_interpret(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    image = load_pgm(args.image)
    model = load_model(args.model)
    prims = extract_all(image, cfg.extraction_params())
    dims = (image.width, image.height)
    table = build_candidates(model, prims, k=cfg.candidates)
    interp = interpret_beam(model, table, dims, cfg.beam_width,
                            exact_limit=cfg.exact_limit)
    thr = model.score_threshold
    decision = None if thr is None else (
        "accept" if interp.score > thr else "reject")
    out = _out_dir(args)
    stem = Path(args.image).stem
    doc = {
        "image": Path(args.image).name,
        "class_label": model.class_label,
        "score": interp.score,
        "score_threshold": thr,
        "decision": decision,
        "assignment": _assignment_doc(interp.assignment),
        "feature_vector": [float(v) for v in interp.feature_vector],
    }
    json_path = out / f"{stem}.interpretation.json"
    _dump_json(doc, json_path)
    written = [json_path]
    if args.render:
        from . import render

        svg_path = out / f"{stem}.overlay.svg"
        svg_path.write_text(render.svg_overlay(
            image, interp.assignment, [c.name for c in model.components]))
        written.append(svg_path)
    tag = "" if decision is None else f" ({decision})"
    print(f"{Path(args.image).name}: score {interp.score:.6f}{tag}")
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    samples = load_corpus(args.corpus)
    start = (load_model(args.model) if args.model
             else reference_model(args.class_label))
    kw = {"k": cfg.candidates, "beam_width": cfg.train_beam_width,
          "exact_limit": cfg.exact_limit,
          "extraction": cfg.extraction_params()}
    result = train_structured(start, samples, epochs=cfg.epochs,
                              averaging=cfg.averaging,
                              learning_rate=cfg.learning_rate, **kw)
    calibrated = calibrate_threshold(result.model, samples, **kw)
    out = _out_dir(args)
    model_path = out / "model.json"
    save_model(calibrated, str(model_path))
    csv_path = out / "train.csv"
    lines = ["epoch,mistakes"]
    lines += [f"{i},{m}" for i, m in enumerate(result.mistakes_per_epoch)]
    csv_path.write_text("\n".join(lines) + "\n")

    from . import render
    from .learning import score_samples

    pos, neg = [], []
    for s, interp in score_samples(calibrated, samples, **kw):
        if interp is not None:
            (pos if s.is_positive else neg).append(interp.score)
    fig_path = out / "train_scores.png"
    render.save_score_figure(pos, neg, calibrated.score_threshold, fig_path)

    mistakes = ",".join(str(m) for m in result.mistakes_per_epoch)
    print(f"trained {result.epochs_run} epoch(s) on {result.samples_used} "
          f"positive sample(s); mistakes per epoch: {mistakes}")
    if result.skipped:
        print(f"skipped {len(result.skipped)} sample(s) whose gold did not "
              f"ground: {', '.join(result.skipped)}")
    print(f"calibrated threshold: {calibrated.score_threshold:.6f}")
    for p in (model_path, csv_path, fig_path):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    samples = load_corpus(args.corpus)
    model = load_model(args.model)
    params = cfg.extraction_params()
    rows = []
    overlays = []
    correct = 0
    thr = model.score_threshold
    for s in samples:
        prims = extract_all(s.image, params)
        dims = (s.image.width, s.image.height)
        try:
            table = build_candidates(model, prims, k=cfg.candidates)
            interp = interpret_beam(model, table, dims, cfg.beam_width,
                                    exact_limit=cfg.exact_limit)
        except (UninterpretableError, ExactLimitError):
            interp = None
        pred = (interp.assignment if interp is not None
                else {c.name: None for c in model.components})
        rows.append((s.name, jaccard_correspondence(pred, s.gold, dims)))
        if thr is not None:
            predicted = interp is not None and interp.score > thr
            correct += int(predicted == s.is_positive)
        if args.render:
            overlays.append((s.name, s.image, pred))
    out = _out_dir(args)
    csv_path = out / "eval.csv"
    csv_path.write_text(eval_csv(rows))

    from . import render

    fig_path = out / "eval.png"
    render.save_eval_figure([n for n, _ in rows],
                            [r.mean_jaccard for _, r in rows], fig_path)
    written = [csv_path, fig_path]
    if args.render:
        overlay_dir = out / "overlays"
        overlay_dir.mkdir(exist_ok=True)
        order = [c.name for c in model.components]
        written += render.save_overlay_set(overlays, order, overlay_dir)
    mean = (sum(r.mean_jaccard for _, r in rows) / len(rows)) if rows else 0.0
    print(f"evaluated {len(rows)} sample(s): mean Jaccard {mean:.4f}")
    if thr is not None and samples:
        print(f"classification accuracy {correct / len(samples):.4f} "
              f"at threshold {thr:.6f}")
    for p in written[:2]:
        print(f"wrote {p}")
    if args.render:
        print(f"wrote {len(overlays)} overlay(s) under {out / 'overlays'}")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    samples = load_corpus(args.corpus)
    model = load_model(args.model)
    if model.score_threshold is None:
        raise InvalidModelError(
            ["model has no calibrated score threshold; train first"])
    indices = (args.relation if args.relation is not None
               else list(range(len(model.relations))))
    for i in indices:
        if not 0 <= i < len(model.relations):
            raise InvalidModelError([f"relation index {i} out of range "
                                     f"(model has {len(model.relations)})"])
    kw = _search_kwargs(cfg)
    reports = [ablate_feature(model, samples, i, **kw) for i in indices]
    out = _out_dir(args)
    csv_path = out / "ablation.csv"
    csv_path.write_text(ablation_csv(reports))

    from . import render

    labels = [rep.relation for rep in reports]
    metrics: dict[str, list[float]] = {}
    for rep in reports:
        for row in rep.rows:
            metrics.setdefault(row.metric, []).append(row.delta)
    fig_path = out / "ablation.png"
    render.save_ablation_figure(labels, metrics, fig_path)
    for rep in reports:
        deltas = ", ".join(f"{row.metric} drop {row.delta:+.4f}"
                           for row in rep.rows)
        print(f"[{rep.relation_index}] {rep.relation}: {deltas}")
    for p in (csv_path, fig_path):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_reduce(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    image = load_pgm(args.image)
    out = _out_dir(args)
    stem = Path(args.image).stem
    for step, reduced in descendants(image, cfg.factor):
        path = out / f"{stem}.{step.kind.value}.pgm"
        save_pgm(reduced, path)
        print(f"wrote {path} ({reduced.width}x{reduced.height})")
    return EXIT_OK


def cmd_scan(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    image = load_pgm(args.image)
    models = [load_model(p) for p in args.model]
    params = cfg.extraction_params()
    result = scan(image, models, window=cfg.window, stride=cfg.stride,
                  scales=cfg.scales, k=cfg.candidates,
                  beam_width=cfg.scan_beam_width,
                  exact_limit=cfg.exact_limit, extraction=params,
                  nms_iou=cfg.nms_iou)
    if result.window_exceeds_image:
        print("warning: image is smaller than the scan window at every "
              "scale; nothing to detect", file=sys.stderr)
    dets = result.detections
    if cfg.refine:
        dets = refine_all(dets, image, k=cfg.candidates,
                          beam_width=cfg.scan_beam_width,
                          exact_limit=cfg.exact_limit, extraction=params)
    dims = (image.width, image.height)
    gi = combine(dets, dims=dims, merge_iou=cfg.merge_iou)
    doc = {
        "image": Path(args.image).name,
        "dims": list(dims),
        "windows_scored": result.windows_scored,
        "window_exceeds_image": result.window_exceeds_image,
        "detections": [
            {
                "label": d.label,
                "box": list(d.box),
                "scale": d.scale,
                "score": d.score,
                "scan_score": d.scan_score,
                "refined": d.refined,
                "refine_failed": d.refine_failed,
                "assignment": _assignment_doc(d.assignment),
            }
            for d in gi.detections
        ],
        "claims": [
            {
                "label": c.label,
                "component": c.component,
                "confidence": c.confidence,
                "sources": list(c.sources),
                "pixels": [list(p) for p in sorted(c.pixels)],
            }
            for c in gi.claims
        ],
    }
    out = _out_dir(args)
    stem = Path(args.image).stem
    json_path = out / f"{stem}.scan.json"
    _dump_json(doc, json_path)
    written = [json_path]
    if args.render:
        from . import render

        svg_path = out / f"{stem}.scan.svg"
        svg_path.write_text(render.svg_claims(image, gi.claims,
                                              gi.detections))
        written.append(svg_path)
    print(f"{len(gi.detections)} detection(s), {len(gi.claims)} claim(s)")
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    n_neg = args.negatives if args.negatives is not None else args.n
    samples = make_corpus(args.seed, args.n, n_neg,
                          (cfg.glyph_dim, cfg.glyph_dim), cfg.noise_sigma)
    manifest = write_corpus(str(out / "glyphs"), samples)
    print(f"wrote {args.n} positive + {n_neg} negative glyph(s); "
          f"manifest {manifest}")
    if args.scenes > 0:
        scenes = [generate_scene(args.seed + 100_000 + i,
                                 n_glyphs=cfg.n_glyphs,
                                 dims=(cfg.scene_dim, cfg.scene_dim),
                                 sigma=cfg.noise_sigma)
                  for i in range(args.scenes)]
        scene_manifest = write_scenes(str(out / "scenes"), scenes)
        print(f"wrote {args.scenes} scene(s); manifest {scene_manifest}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UninterpretableError as e:
        print(str(e), file=sys.stderr)
        return EXIT_UNINTERPRETABLE
    except InvalidModelError as e:
        print(str(e), file=sys.stderr)
        return EXIT_INVALID_MODEL
    except (PgmError, ConfigError, OSError) as e:
        print(str(e), file=sys.stderr)
        return EXIT_IO
    except (GenerationError, ReductionExhaustedError, ExactLimitError,
            ValueError) as e:
        print(str(e), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
