"""Attribute extractor interface and score normalization."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Optional, Protocol

import numpy as np

from .detection import pad_box
from .types import (
    EMOTIONS,
    ETHNICITIES,
    GENDERS,
    BoundingBox,
    ContractError,
    FaceAttributes,
    ImageRecord,
    RawAttributeScores,
)

CROP_ID_SEP = "#"


class AttributeExtractor(Protocol):
    def extract(self, face_crop: ImageRecord) -> RawAttributeScores: ...


def face_crop_id(image_id: str, face_index: int) -> str:
    """Id given to the crop of face ``face_index`` (processing order) of an image."""
    return f"{image_id}{CROP_ID_SEP}{face_index}"


def split_crop_id(crop_id: str) -> tuple[str, int]:
    image_id, sep, index = crop_id.rpartition(CROP_ID_SEP)
    if not sep or not index.isdigit():
        raise ValueError(f"not a face crop id: {crop_id!r}")
    return image_id, int(index)


def crop_face(
    image: ImageRecord, box: BoundingBox, margin_ratio: float = 0.0, crop_id: Optional[str] = None
) -> ImageRecord:
    """Copy the region of ``pad_box(box, margin_ratio)`` out of ``image``."""
    if not margin_ratio >= 0:
        raise ContractError(f"margin_ratio must be >= 0, got {margin_ratio!r}")
    if not box.inside(image.height, image.width):
        raise ContractError(f"{box} is not clamped to {image!r}")
    b = pad_box(box, margin_ratio, image.height, image.width)
    pixels = image.pixels[b.y : b.bottom, b.x : b.right].copy()
    return ImageRecord(crop_id or image.id, pixels, image.source_path)


def _canonical(label: str, vocabulary: tuple[str, ...]) -> str:
    if label in vocabulary:
        return label
    folded = label.replace("_", " ").strip().lower()
    for v in vocabulary:
        if v.lower() == folded:
            return v
    raise ContractError(f"label {label!r} is not one of {vocabulary}")


def _argmax_label(scores: Mapping[str, float], vocabulary: tuple[str, ...], field: str) -> str:
    if not scores:
        raise ContractError(f"{field} score map is empty")
    canon: dict[str, float] = {}
    for label, score in scores.items():
        score = float(score)
        if not math.isfinite(score) or score < 0:
            raise ContractError(f"{field} score for {label!r} must be finite and >= 0, got {score!r}")
        key = _canonical(label, vocabulary)
        canon[key] = max(score, canon.get(key, 0.0))
    best = None
    for label in sorted(canon):
        if best is None or canon[label] > canon[best]:
            best = label
    return best


def round_age(age: float) -> int:
    """Round half up, floored at 1."""
    return max(1, math.floor(age + 0.5))


def normalize_attributes(raw: RawAttributeScores) -> FaceAttributes:
    age = float(raw.age)
    if not math.isfinite(age) or age < 0:
        raise ContractError(f"age must be finite and >= 0, got {raw.age!r}")
    return FaceAttributes(
        age=round_age(age),
        gender=_argmax_label(raw.gender_scores, GENDERS, "gender"),
        ethnicity=_argmax_label(raw.ethnicity_scores, ETHNICITIES, "ethnicity"),
        emotion=_argmax_label(raw.emotion_scores, EMOTIONS, "emotion"),
    )


def one_hot_scores(attrs: FaceAttributes) -> RawAttributeScores:
    return RawAttributeScores(
        age=float(attrs.age),
        gender_scores={g: float(g == attrs.gender) for g in GENDERS},
        ethnicity_scores={e: float(e == attrs.ethnicity) for e in ETHNICITIES},
        emotion_scores={e: float(e == attrs.emotion) for e in EMOTIONS},
    )


def parse_attribute_table(text: str, origin: str = "<table>") -> dict[tuple[str, int], FaceAttributes]:
    """Parse ``image_id face_index age gender ethnicity emotion`` records.

    Ethnicity tokens spell spaces as underscores (``latino_hispanic``).
    """
    table = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(
                f"{origin}:{lineno}: expected 'image_id face_index age gender ethnicity emotion', got {line!r}"
            )
        image_id, index, age, gender, ethnicity, emotion = parts
        try:
            attrs = FaceAttributes(
                age=int(age),
                gender=_canonical(gender, GENDERS),
                ethnicity=_canonical(ethnicity, ETHNICITIES),
                emotion=_canonical(emotion, EMOTIONS),
            )
            key = (image_id, int(index))
        except ValueError as exc:
            raise ValueError(f"{origin}:{lineno}: {exc}") from None
        table[key] = attrs
    return table


def format_attribute_table(table: Mapping[tuple[str, int], FaceAttributes]) -> str:
    lines = []
    for (image_id, index), a in sorted(table.items()):
        lines.append(f"{image_id} {index} {a.age} {a.gender} {a.ethnicity.replace(' ', '_')} {a.emotion}\n")
    return "".join(lines)


class StubExtractor:
    """Looks attributes up by the crop id ``<image_id>#<face_index>``.

    Faces missing from the table get ``default`` when one is set and raise
    ``LookupError`` otherwise.
    """

    def __init__(
        self,
        table: Optional[Mapping[tuple[str, int], FaceAttributes]] = None,
        default: Optional[FaceAttributes] = None,
    ):
        self.table = dict(table or {})
        self.default = default

    @classmethod
    def from_file(cls, path, default: Optional[FaceAttributes] = None) -> "StubExtractor":
        path = Path(path)
        return cls(parse_attribute_table(path.read_text(), str(path)), default)

    def extract(self, face_crop: ImageRecord) -> RawAttributeScores:
        key = split_crop_id(face_crop.id)
        attrs = self.table.get(key, self.default)
        if attrs is None:
            raise LookupError(f"no stub attributes for image {key[0]!r} face {key[1]}")
        return one_hot_scores(attrs)


class DeepFaceExtractor:
    """Adapter for DeepFace's VGG-Face based attribute models. Imported lazily."""

    def __init__(self):
        try:
            from deepface import DeepFace  # type: ignore
        except ImportError as exc:
            raise RuntimeError("DeepFaceExtractor requires the 'deepface' package") from exc
        self._deepface = DeepFace

    def extract(self, face_crop: ImageRecord) -> RawAttributeScores:
        bgr = np.ascontiguousarray(face_crop.pixels[:, :, ::-1])
        result = self._deepface.analyze(
            bgr,
            actions=["age", "gender", "race", "emotion"],
            enforce_detection=False,
            detector_backend="skip",
            silent=True,
        )
        info = result[0] if isinstance(result, list) else result
        return RawAttributeScores(
            age=float(info["age"]),
            gender_scores=dict(info["gender"]),
            ethnicity_scores=dict(info["race"]),
            emotion_scores=dict(info["emotion"]),
        )
