"""Face detector interface, box geometry and rectangle mask rasterization."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Iterable, Mapping, Optional, Protocol, Sequence

import numpy as np

from .types import BoundingBox, ContractError, FaceDetection, ImageRecord

logger = logging.getLogger(__name__)

SIDECAR_SUFFIX = ".faces.txt"


class DegenerateBoxError(ContractError):
    """A box has no overlap with the image it is supposed to describe."""


class FaceDetector(Protocol):
    def detect(self, image: ImageRecord) -> list[FaceDetection]:
        """Return raw, possibly unclamped, detections for ``image``."""
        ...


class BinaryMask:
    """An ``H x W`` raster over {0, 1}; 1 marks the region to regenerate."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        values = np.asarray(values)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ContractError(f"mask must be a non-empty 2-D array, got shape {values.shape}")
        if values.dtype != np.uint8:
            if values.dtype == bool or np.all((values == 0) | (values == 1)):
                values = values.astype(np.uint8)
            else:
                raise ContractError("mask values must be 0 or 1")
        elif values.max(initial=0) > 1:
            raise ContractError("mask values must be 0 or 1")
        self.values = values

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def popcount(self) -> int:
        return int(self.values.sum(dtype=np.int64))

    def as_bool(self) -> np.ndarray:
        return self.values.astype(bool)

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"BinaryMask({self.width}x{self.height}, ones={self.popcount()})"


def clamp_box(box: BoundingBox, height: int, width: int) -> BoundingBox:
    """Intersect ``box`` with the image rectangle. The box is never shifted."""
    x0 = max(box.x, 0)
    y0 = max(box.y, 0)
    x1 = min(box.right, width)
    y1 = min(box.bottom, height)
    if x1 <= x0 or y1 <= y0:
        raise DegenerateBoxError(f"{box} does not intersect a {width}x{height} image")
    return BoundingBox(x0, y0, x1 - x0, y1 - y0)


def pad_box(box: BoundingBox, ratio: float, height: int, width: int) -> BoundingBox:
    """Grow ``box`` by ``ratio * w`` horizontally and ``ratio * h`` vertically.

    The growth is split evenly between opposite sides and rounded outward,
    then the result is clamped to the image.
    """
    if not ratio >= 0:
        raise ContractError(f"padding ratio must be >= 0, got {ratio!r}")
    if ratio == 0:
        return clamp_box(box, height, width)
    gx = ratio * box.w / 2.0
    gy = ratio * box.h / 2.0
    x0 = math.floor(box.x - gx)
    y0 = math.floor(box.y - gy)
    x1 = math.ceil(box.right + gx)
    y1 = math.ceil(box.bottom + gy)
    return clamp_box(BoundingBox(x0, y0, x1 - x0, y1 - y0), height, width)


def rasterize_mask(box: BoundingBox, height: int, width: int) -> BinaryMask:
    if not box.inside(height, width):
        raise ContractError(f"{box} is not clamped to a {width}x{height} image")
    values = np.zeros((height, width), dtype=np.uint8)
    values[box.y : box.bottom, box.x : box.right] = 1
    return BinaryMask(values)


def mask_union(
    masks: Sequence[BinaryMask], height: Optional[int] = None, width: Optional[int] = None
) -> BinaryMask:
    """Cellwise OR of ``masks``.

    ``height`` and ``width`` are required when ``masks`` is empty and checked
    against the masks otherwise.
    """
    if not masks:
        if height is None or width is None:
            raise ContractError("union of no masks needs explicit height and width")
        return BinaryMask.zeros(height, width)
    shape = masks[0].shape
    if height is not None and width is not None and shape != (height, width):
        raise ContractError(f"mask shape {shape} does not match {(height, width)}")
    out = np.zeros(shape, dtype=np.uint8)
    for m in masks:
        if m.shape != shape:
            raise ContractError(f"mask shapes differ: {m.shape} vs {shape}")
        np.bitwise_or(out, m.values, out=out)
    return BinaryMask(out)


def save_mask_png(mask: BinaryMask, path) -> None:
    """Write ``mask`` as a single-channel 8-bit image holding 0 or 255."""
    from PIL import Image

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.values * np.uint8(255), mode="L").save(path)


def parse_sidecar(text: str, origin: str = "<sidecar>") -> list[FaceDetection]:
    """Parse ``x y w h confidence`` lines. Blank lines and ``#`` comments are ignored."""
    detections = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{origin}:{lineno}: expected 'x y w h confidence', got {line!r}")
        try:
            x, y, w, h = (int(p) for p in parts[:4])
            conf = float(parts[4])
        except ValueError as exc:
            raise ValueError(f"{origin}:{lineno}: {exc}") from None
        detections.append(FaceDetection(BoundingBox(x, y, w, h), conf))
    return detections


def format_sidecar(detections: Iterable[FaceDetection]) -> str:
    return "".join(
        f"{d.box.x} {d.box.y} {d.box.w} {d.box.h} {d.confidence!r}\n" for d in detections
    )


def sidecar_path(source_path) -> Path:
    p = Path(source_path)
    return p.with_name(p.stem + SIDECAR_SUFFIX)


class StubDetector:
    """Deterministic detector reading boxes from a table or from sidecar files.

    Lookups go to ``table[image.id]`` first. Otherwise the detector reads
    ``<stem>.faces.txt`` next to ``image.source_path``; a missing sidecar
    means no faces.
    """

    def __init__(self, table: Optional[Mapping[str, Sequence[FaceDetection]]] = None):
        self.table = dict(table or {})

    def detect(self, image: ImageRecord) -> list[FaceDetection]:
        if image.id in self.table:
            return list(self.table[image.id])
        if not image.source_path:
            return []
        path = sidecar_path(image.source_path)
        if not path.exists():
            return []
        return parse_sidecar(path.read_text(), str(path))


class RetinaFaceDetector:
    """Adapter for the ``retina-face`` package. Imported lazily."""

    def __init__(self, threshold: float = 0.0):
        try:
            from retinaface import RetinaFace  # type: ignore
        except ImportError as exc:
            raise RuntimeError("RetinaFaceDetector requires the 'retina-face' package") from exc
        self._model = RetinaFace
        self.threshold = threshold

    def detect(self, image: ImageRecord) -> list[FaceDetection]:
        bgr = np.ascontiguousarray(image.pixels[:, :, ::-1])
        faces = self._model.detect_faces(bgr, threshold=self.threshold)
        if not isinstance(faces, dict):
            return []
        out = []
        for face in faces.values():
            x1, y1, x2, y2 = (int(round(v)) for v in face["facial_area"])
            if x2 <= x1 or y2 <= y1:
                continue
            score = min(max(float(face.get("score", 1.0)), 0.0), 1.0)
            out.append(FaceDetection(BoundingBox(x1, y1, x2 - x1, y2 - y1), score))
        return out
