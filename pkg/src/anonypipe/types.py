"""Domain types shared by every pipeline stage."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

GENDERS = ("Man", "Woman")
ETHNICITIES = ("asian", "indian", "black", "white", "middle eastern", "latino hispanic")
EMOTIONS = ("angry", "disgust", "fear", "happy", "sad", "surprise", "neutral")


class ContractError(ValueError):
    """Raised when an input violates a documented invariant."""


class ImageRecord:
    """An identified 8-bit RGB raster.

    ``pixels`` is an ``(H, W, 3)`` uint8 array. The array is stored as given,
    callers that want isolation should pass a copy.
    """

    __slots__ = ("id", "pixels", "source_path")

    def __init__(self, id: str, pixels: np.ndarray, source_path: str = ""):
        if not id:
            raise ContractError("image id must be non-empty")
        pixels = np.asarray(pixels)
        if pixels.dtype != np.uint8:
            raise ContractError(f"pixels must be uint8, got {pixels.dtype}")
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ContractError(f"pixels must have shape (H, W, 3), got {pixels.shape}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ContractError("image must be at least 1x1")
        self.id = id
        self.pixels = pixels
        self.source_path = source_path

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def with_pixels(self, pixels: np.ndarray) -> "ImageRecord":
        return ImageRecord(self.id, pixels, self.source_path)

    def copy(self) -> "ImageRecord":
        return ImageRecord(self.id, self.pixels.copy(), self.source_path)

    def __eq__(self, other):
        if not isinstance(other, ImageRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.source_path == other.source_path
            and self.pixels.shape == other.pixels.shape
            and bool(np.array_equal(self.pixels, other.pixels))
        )

    def __repr__(self):
        return f"ImageRecord(id={self.id!r}, size={self.width}x{self.height}, source_path={self.source_path!r})"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box covering columns [x, x+w) and rows [y, y+h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ContractError(f"box.{name} must be an int, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.w < 1 or self.h < 1:
            raise ContractError(f"box must have w >= 1 and h >= 1, got {self}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    def inside(self, height: int, width: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.right <= width and self.bottom <= height

    def contains(self, other: "BoundingBox") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.right <= self.right
            and other.bottom <= self.bottom
        )

    def to_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class FaceDetection:
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        c = float(self.confidence)
        if not (0.0 <= c <= 1.0):
            raise ContractError(f"confidence must lie in [0, 1], got {self.confidence!r}")
        object.__setattr__(self, "confidence", c)


class FaceStatus(str, enum.Enum):
    ANONYMIZED = "anonymized"
    SKIPPED_LOW_RESOLUTION = "skipped_low_resolution"
    SKIPPED_LOW_CONFIDENCE = "skipped_low_confidence"
    BACKEND_FAILED = "backend_failed"


@dataclass(frozen=True)
class RawAttributeScores:
    """Unnormalized output of an attribute extractor."""

    age: float
    gender_scores: Mapping[str, float]
    ethnicity_scores: Mapping[str, float]
    emotion_scores: Mapping[str, float]


@dataclass(frozen=True)
class FaceAttributes:
    age: int
    gender: str
    ethnicity: str
    emotion: str

    def __post_init__(self):
        if isinstance(self.age, bool) or not isinstance(self.age, (int, np.integer)) or self.age < 1:
            raise ContractError(f"age must be an int >= 1, got {self.age!r}")
        object.__setattr__(self, "age", int(self.age))
        if self.gender not in GENDERS:
            raise ContractError(f"unknown gender {self.gender!r}; expected one of {GENDERS}")
        if self.ethnicity not in ETHNICITIES:
            raise ContractError(f"unknown ethnicity {self.ethnicity!r}; expected one of {ETHNICITIES}")
        if self.emotion not in EMOTIONS:
            raise ContractError(f"unknown emotion {self.emotion!r}; expected one of {EMOTIONS}")

    def to_dict(self) -> dict:
        return {"age": self.age, "gender": self.gender, "ethnicity": self.ethnicity, "emotion": self.emotion}


@dataclass
class FaceRecord:
    """Provenance of one processed face.

    ``detection.box`` holds the box clamped to the image, except for detections
    that miss the image entirely, which keep their raw box.
    """

    detection: FaceDetection
    status: FaceStatus
    attributes: Optional[FaceAttributes] = None
    prompt: Optional[str] = None
    seed: Optional[int] = None
    error: Optional[str] = None

    def __post_init__(self):
        self.status = FaceStatus(self.status)
        if self.status is FaceStatus.ANONYMIZED and (
            self.attributes is None or self.prompt is None or self.seed is None
        ):
            raise ContractError("anonymized faces must carry attributes, prompt and seed")


@dataclass
class AnonymizationResult:
    image_id: str
    output: ImageRecord
    faces: list[FaceRecord] = field(default_factory=list)

    def count(self, status: FaceStatus) -> int:
        return sum(1 for f in self.faces if f.status is status)


def is_finite_nonneg(value: float) -> bool:
    return isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value) and value >= 0
