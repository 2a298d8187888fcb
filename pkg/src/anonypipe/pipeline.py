"""Per-image and per-batch orchestration of detection, attributes, prompting and inpainting."""

from __future__ import annotations

import logging
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

from .attributes import AttributeExtractor, crop_face, face_crop_id, normalize_attributes
from .config import PipelineConfig, derive_seed
from .detection import BinaryMask, DegenerateBoxError, FaceDetector, clamp_box, pad_box, rasterize_mask
from .images import ImageSource
from .inpainting import InpaintBackend, composite, resolution_gate
from .prompting import PromptTemplate, build_prompt
from .types import (
    AnonymizationResult,
    ContractError,
    FaceAttributes,
    FaceDetection,
    FaceRecord,
    FaceStatus,
    ImageRecord,
)

logger = logging.getLogger(__name__)


def processing_order(detections: Sequence[FaceDetection], height: int, width: int):
    """Clamp detections and sort them largest first, ties by (y, x).

    Returns ``(detection, in_frame)`` pairs. Detections that miss the image
    keep their raw box and sort last.
    """
    items = []
    for det in detections:
        try:
            det = FaceDetection(clamp_box(det.box, height, width), det.confidence)
            items.append((det, True))
        except DegenerateBoxError:
            items.append((det, False))
    return sorted(items, key=lambda it: (-it[0].box.area if it[1] else 1, it[0].box.y, it[0].box.x))


def face_mask(record: FaceRecord, config: PipelineConfig, height: int, width: int) -> BinaryMask:
    """Inpainting mask for an in-frame face record."""
    box = pad_box(record.detection.box, config.mask_padding_ratio, height, width)
    return rasterize_mask(box, height, width)


def anonymize_image(
    image: ImageRecord,
    config: PipelineConfig,
    detector: FaceDetector,
    extractor: AttributeExtractor,
    inpainter: InpaintBackend,
) -> AnonymizationResult:
    """Replace every eligible face in ``image``, one face at a time.

    Each face is inpainted on the working image left by the faces before it.
    Attributes are always read from the untouched original. A failure in
    attribute extraction or inpainting marks that face ``backend_failed``
    and leaves its region as it was; a detector failure propagates.
    """
    H, W = image.height, image.width
    detections = detector.detect(image)
    template = PromptTemplate(config.prompt_template)
    working = image.copy()
    records = []
    for k, (det, in_frame) in enumerate(processing_order(detections, H, W)):
        if det.confidence < config.detection_confidence_threshold:
            records.append(FaceRecord(det, FaceStatus.SKIPPED_LOW_CONFIDENCE))
            continue
        if not in_frame or not resolution_gate(det.box, config.min_face_side):
            records.append(FaceRecord(det, FaceStatus.SKIPPED_LOW_RESOLUTION))
            continue
        attrs: Optional[FaceAttributes] = None
        prompt: Optional[str] = None
        seed: Optional[int] = None
        try:
            crop = crop_face(image, det.box, config.extraction_margin_ratio, face_crop_id(image.id, k))
            attrs = normalize_attributes(extractor.extract(crop))
            prompt = build_prompt(attrs, template, config.emotion_nouns)
            seed = derive_seed(config.seed_policy, image.id, k)
            mask = rasterize_mask(pad_box(det.box, config.mask_padding_ratio, H, W), H, W)
            generated = inpainter.inpaint(working.copy(), mask, prompt, seed, config.inpaint_params)
            if not isinstance(generated, ImageRecord):
                raise ContractError(f"backend returned {type(generated).__name__}, expected ImageRecord")
            working = composite(working, generated, mask, config.blend_mode)
        except Exception as exc:
            logger.warning("image %s face %d failed: %s", image.id, k, exc)
            records.append(
                FaceRecord(det, FaceStatus.BACKEND_FAILED, attrs, prompt, seed, error=f"{type(exc).__name__}: {exc}")
            )
            continue
        records.append(FaceRecord(det, FaceStatus.ANONYMIZED, attrs, prompt, seed))
    return AnonymizationResult(image.id, working, records)


@dataclass
class BatchEntry:
    image_id: str
    source: Optional[ImageSource] = None
    result: Optional[AnonymizationResult] = None
    error: Optional[str] = None


@dataclass
class BatchReport:
    entries: list[BatchEntry] = field(default_factory=list)

    @property
    def images(self) -> int:
        return len(self.entries)

    @property
    def failed_images(self) -> int:
        return sum(1 for e in self.entries if e.error is not None)

    @property
    def status_counts(self) -> Counter:
        c = Counter({s: 0 for s in FaceStatus})
        for e in self.entries:
            if e.result is not None:
                c.update(f.status for f in e.result.faces)
        return c

    @property
    def faces(self) -> int:
        return sum(self.status_counts.values())

    def count(self, status: FaceStatus) -> int:
        return self.status_counts[FaceStatus(status)]

    def summary(self) -> dict:
        out = {"images": self.images, "failed_images": self.failed_images, "faces": self.faces}
        out.update({s.value: n for s, n in self.status_counts.items()})
        return out


Backends = tuple  # (detector, extractor, inpainter)
BatchInput = Union[ImageRecord, ImageSource]


def anonymize_batch(
    inputs: Iterable[BatchInput],
    config: PipelineConfig,
    detector: Optional[FaceDetector] = None,
    extractor: Optional[AttributeExtractor] = None,
    inpainter: Optional[InpaintBackend] = None,
    *,
    workers: int = 1,
    backend_factory: Optional[Callable[[], Backends]] = None,
    sink: Optional[Callable[[BatchInput, ImageRecord, AnonymizationResult], None]] = None,
    keep_outputs: bool = True,
) -> BatchReport:
    """Anonymize many images, isolating failures per image.

    With ``workers > 1`` each worker thread builds its own backends through
    ``backend_factory``. ``sink`` runs in the worker right after an image is
    done (the CLI uses it to write outputs); exceptions it raises are
    recorded against that image. Entries come back in input order.
    """
    inputs = list(inputs)
    if workers < 1:
        raise ContractError(f"workers must be >= 1, got {workers}")
    if backend_factory is None:
        if detector is None or extractor is None or inpainter is None:
            raise ContractError("pass detector, extractor and inpainter, or a backend_factory")
        if workers > 1:
            raise ContractError("workers > 1 needs a backend_factory; backends are not shared across workers")
        shared = (detector, extractor, inpainter)
        get_backends = lambda: shared  # noqa: E731
    else:
        local = threading.local()

        def get_backends():
            if not hasattr(local, "backends"):
                local.backends = backend_factory()
            return local.backends

    def run_one(item: BatchInput) -> BatchEntry:
        source = item if isinstance(item, ImageSource) else None
        entry = BatchEntry(item.id, source)
        try:
            image = item.load() if source is not None else item
        except Exception as exc:
            entry.error = f"unreadable input: {type(exc).__name__}: {exc}"
            return entry
        try:
            result = anonymize_image(image, config, *get_backends())
            if sink is not None:
                sink(item, image, result)
        except Exception as exc:
            logger.error("image %s failed: %s", item.id, exc)
            entry.error = f"{type(exc).__name__}: {exc}"
            return entry
        if not keep_outputs:
            result.output = None
        entry.result = result
        return entry

    if workers == 1:
        entries = [run_one(item) for item in inputs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(run_one, inputs))
    return BatchReport(entries)
