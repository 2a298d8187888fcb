"""Command-line entry point: ``anonypipe anonymize`` and ``anonypipe evaluate``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import manifest as mf
from .attributes import DeepFaceExtractor, StubExtractor
from .config import ConfigError, RunConfig, config_summary, load_config
from .detection import RetinaFaceDetector, StubDetector, save_mask_png
from .evaluation import DeepFaceEmbedder, StubEmbedder, evaluate_pairs, format_report
from .images import discover_inputs, load_image, write_output
from .inpainting import ExternalBackend, IdentityBackend, SeededNoiseBackend
from .pipeline import anonymize_batch, face_mask
from .types import AnonymizationResult, FaceAttributes, FaceStatus

logger = logging.getLogger("anonypipe")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
MASK_DIR = "_masks"
ATTRIBUTES_TABLE_NAME = "attributes.txt"
# Stub extractor answer for faces absent from the attribute table.
STUB_DEFAULT_ATTRIBUTES = FaceAttributes(age=30, gender="Man", ethnicity="white", emotion="neutral")


def _anonymize_parser(sub) -> argparse.ArgumentParser:
    p = sub.add_parser("anonymize", help="anonymize every face in a directory of images")
    p.add_argument("--input", help="directory of PNG/JPEG images, or a file listing image paths")
    p.add_argument("--output", help="directory for the mirrored output tree and manifest")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--backend", dest="inpaint_backend", choices=["identity", "noise", "external"])
    p.add_argument("--detector", choices=["stub", "retinaface"])
    p.add_argument("--extractor", choices=["stub", "deepface"])
    p.add_argument("--attributes-table", dest="attributes_table", help="stub extractor attribute table")
    p.add_argument("--endpoint", dest="external_endpoint", help="URL of the external inpainting service")
    p.add_argument("--min-face-side", dest="min_face_side", type=int)
    p.add_argument("--confidence", dest="detection_confidence_threshold", type=float)
    p.add_argument("--padding", dest="mask_padding_ratio", type=float)
    p.add_argument("--blend", dest="blend_mode", help="'hard' or 'feathered:<radius>'")
    p.add_argument("--seed", type=int, help="use this fixed seed for every face")
    p.add_argument("--workers", type=int)
    p.add_argument("--emit-masks", dest="emit_masks", action="store_true", default=None)
    p.add_argument("--template", dest="prompt_template")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(subparser=p)
    return p


def _evaluate_parser(sub) -> argparse.ArgumentParser:
    p = sub.add_parser("evaluate", help="measure identity change and attribute agreement of a run")
    p.add_argument("--run-dir", required=True, help="output directory of an anonymize run")
    p.add_argument("--manifest", help=f"manifest path (default: <run-dir>/{mf.MANIFEST_NAME})")
    p.add_argument("--report", help="report path (default: <run-dir>/eval_report.json)")
    p.add_argument("--embedder", choices=["stub", "deepface"], default="stub")
    p.add_argument("--extractor", choices=["stub", "deepface"], default="stub")
    p.add_argument("--age-tolerance", type=int, default=5)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(subparser=p)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anonypipe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _anonymize_parser(sub)
    _evaluate_parser(sub)
    return parser


def make_backends(cfg: RunConfig):
    """Fresh detector, extractor and inpainter for one worker."""
    detector = StubDetector() if cfg.detector == "stub" else RetinaFaceDetector()
    if cfg.extractor == "stub":
        table = cfg.attributes_table
        if table is None and cfg.input is not None and cfg.input.is_dir():
            candidate = cfg.input / ATTRIBUTES_TABLE_NAME
            table = candidate if candidate.exists() else None
        extractor = (
            StubExtractor.from_file(table, STUB_DEFAULT_ATTRIBUTES)
            if table is not None
            else StubExtractor(default=STUB_DEFAULT_ATTRIBUTES)
        )
    else:
        extractor = DeepFaceExtractor()
    if cfg.inpaint_backend == "identity":
        inpainter = IdentityBackend()
    elif cfg.inpaint_backend == "noise":
        inpainter = SeededNoiseBackend()
    else:
        inpainter = ExternalBackend(cfg.external_endpoint, cfg.external_model)
    return detector, extractor, inpainter


def _relpath(path, start) -> str:
    return Path(os.path.relpath(Path(path).resolve(), Path(start).resolve())).as_posix()


def cmd_anonymize(args, parser: argparse.ArgumentParser) -> int:
    flags = {
        k: getattr(args, k)
        for k in (
            "input", "output", "inpaint_backend", "detector", "extractor", "attributes_table",
            "external_endpoint", "min_face_side", "detection_confidence_threshold",
            "mask_padding_ratio", "blend_mode", "workers", "emit_masks", "prompt_template",
        )
    }
    if args.seed is not None:
        flags["seed_policy"] = args.seed
    try:
        cfg = load_config(flags, os.environ, args.config)
        cfg.check_paths()
        sources = discover_inputs(cfg.input)
        backends = make_backends(cfg)
    except (ConfigError, ValueError, OSError, RuntimeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"anonypipe anonymize: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_root = cfg.output
    out_root.mkdir(parents=True, exist_ok=True)

    def sink(source, image, result: AnonymizationResult):
        write_output(result.output, image, out_root / source.id)
        if cfg.emit_masks:
            stem = Path(source.id).with_suffix("")
            for k, face in enumerate(result.faces):
                if face.status is FaceStatus.ANONYMIZED:
                    mask = face_mask(face, cfg.pipeline, image.height, image.width)
                    save_mask_png(mask, out_root / MASK_DIR / f"{stem.as_posix()}.face{k}.png")

    first = [backends]

    def factory():
        # Reuse the already built set once so construction errors surface before the run.
        return first.pop() if first else make_backends(cfg)

    report = anonymize_batch(
        sources, cfg.pipeline, workers=cfg.workers, backend_factory=factory, sink=sink, keep_outputs=False
    )

    entries = []
    for source, entry in zip(sources, report.entries):
        faces = () if entry.result is None else tuple(mf.ManifestFace.from_record(f) for f in entry.result.faces)
        entries.append(
            mf.ManifestEntry(
                image_id=entry.image_id,
                source_path=_relpath(source.path, out_root),
                output_path=None if entry.error else source.id,
                faces=faces,
                error=entry.error,
            )
        )
    header = {k: v for k, v in config_summary(cfg).items() if k not in ("input", "output", "attributes_table", "workers")}
    manifest = mf.Manifest(tuple(entries), header)
    mf.write_manifest(manifest, out_root / mf.MANIFEST_NAME)

    s = report.summary()
    print(
        f"images {s['images']} (failed {s['failed_images']})  faces {s['faces']}  "
        + "  ".join(f"{st.value} {s[st.value]}" for st in FaceStatus)
    )
    for e in report.entries:
        if e.error:
            print(f"  failed: {e.image_id}: {e.error}")
    print(f"manifest: {out_root / mf.MANIFEST_NAME}")
    return EXIT_OK if report.failed_images == 0 else EXIT_PARTIAL


def cmd_evaluate(args, parser: argparse.ArgumentParser) -> int:
    run_dir = Path(args.run_dir)
    manifest_path = Path(args.manifest) if args.manifest else run_dir / mf.MANIFEST_NAME
    try:
        if args.age_tolerance < 0:
            raise ConfigError("--age-tolerance must be >= 0")
        manifest = mf.read_manifest(manifest_path)
        embedder = StubEmbedder() if args.embedder == "stub" else DeepFaceEmbedder()
    except (ConfigError, mf.ManifestError, OSError, RuntimeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"anonypipe evaluate: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.extractor == "stub":
        table = {
            (e.image_id, k): f.attributes
            for e in manifest.entries
            for k, f in enumerate(e.faces)
            if f.attributes is not None
        }
        extractor = StubExtractor(table)
    else:
        extractor = DeepFaceExtractor()

    originals, results, missing = {}, [], []
    for entry in manifest.entries:
        if entry.error is not None or entry.output_path is None:
            continue
        src = run_dir / entry.source_path
        out = run_dir / entry.output_path
        absent = [p for p in (src, out) if not p.exists()]
        if absent:
            missing.extend(absent)
            continue
        originals[entry.image_id] = load_image(src, entry.image_id)
        results.append(
            AnonymizationResult(entry.image_id, load_image(out, entry.image_id), [f.to_record() for f in entry.faces])
        )

    report = evaluate_pairs(originals, results, embedder, extractor, args.age_tolerance)
    report_path = Path(args.report) if args.report else run_dir / "eval_report.json"
    data = report.to_dict()
    data["missing_paths"] = [str(p) for p in missing]
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")

    print(format_report(report))
    print(f"report: {report_path}")
    for p in missing:
        print(f"missing image: {p}", file=sys.stderr)
    return EXIT_PARTIAL if missing or report.errors else EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "anonymize":
        return cmd_anonymize(args, args.subparser)
    return cmd_evaluate(args, args.subparser)


if __name__ == "__main__":
    sys.exit(main())
