"""Identity change and attribute preservation between original and anonymized faces."""

from __future__ import annotations

import statistics
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from .attributes import AttributeExtractor, crop_face, face_crop_id, normalize_attributes
from .types import AnonymizationResult, BoundingBox, ContractError, FaceStatus, ImageRecord

ATTRIBUTE_FIELDS = ("age", "gender", "ethnicity", "emotion")


class FaceEmbedder(Protocol):
    def embed(self, face_crop: ImageRecord) -> np.ndarray: ...


def identity_distance(a, b) -> float:
    """Cosine distance ``1 - cos(a, b)``, in [0, 2]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ContractError(f"embedding dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ContractError("embeddings must be finite")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ContractError("zero-norm embedding")
    if np.array_equal(a, b):
        return 0.0
    d = 1.0 - float(np.dot(a, b) / (na * nb))
    return min(2.0, max(0.0, d))


class StubEmbedder:
    """Mean-pooled ``grid x grid`` patch intensities per channel.

    Intensities are shifted to ``(v + 1) / 256`` so black crops still have a
    nonzero embedding.
    """

    def __init__(self, grid: int = 4):
        if grid < 1:
            raise ContractError("grid must be >= 1")
        self.grid = grid

    @property
    def dim(self) -> int:
        return self.grid * self.grid * 3

    def embed(self, face_crop: ImageRecord) -> np.ndarray:
        px = (face_crop.pixels.astype(np.float64) + 1.0) / 256.0
        H, W = face_crop.height, face_crop.width
        rows = np.linspace(0, H, self.grid + 1)
        cols = np.linspace(0, W, self.grid + 1)
        out = np.empty((self.grid, self.grid, 3))
        for i in range(self.grid):
            r0, r1 = int(rows[i]), max(int(rows[i + 1]), int(rows[i]) + 1)
            r0 = min(r0, H - 1)
            for j in range(self.grid):
                c0, c1 = int(cols[j]), max(int(cols[j + 1]), int(cols[j]) + 1)
                c0 = min(c0, W - 1)
                out[i, j] = px[r0:r1, c0:c1].mean(axis=(0, 1))
        return out.ravel()


class DeepFaceEmbedder:
    """VGG-Face embeddings through DeepFace. Imported lazily."""

    def __init__(self, model_name: str = "VGG-Face"):
        try:
            from deepface import DeepFace  # type: ignore
        except ImportError as exc:
            raise RuntimeError("DeepFaceEmbedder requires the 'deepface' package") from exc
        self._deepface = DeepFace
        self.model_name = model_name

    def embed(self, face_crop: ImageRecord) -> np.ndarray:
        bgr = np.ascontiguousarray(face_crop.pixels[:, :, ::-1])
        rep = self._deepface.represent(
            bgr, model_name=self.model_name, enforce_detection=False, detector_backend="skip"
        )
        return np.asarray(rep[0]["embedding"], dtype=np.float64)


@dataclass
class PairRecord:
    image_id: str
    face_index: int
    identity_distance: float
    age_match: bool
    gender_match: bool
    ethnicity_match: bool
    emotion_match: bool

    def __post_init__(self):
        if not self.identity_distance >= 0:
            raise ContractError("identity distance must be >= 0")

    def matches(self) -> dict[str, bool]:
        return {f: getattr(self, f"{f}_match") for f in ATTRIBUTE_FIELDS}


@dataclass
class PairError:
    image_id: str
    face_index: Optional[int]
    error: str


@dataclass
class EvalReport:
    pairs: list[PairRecord] = field(default_factory=list)
    errors: list[PairError] = field(default_factory=list)
    skipped_faces: int = 0
    age_tolerance: int = 5

    @property
    def pair_count(self) -> int:
        return len(self.pairs)

    def distance_stats(self) -> Optional[dict[str, float]]:
        if not self.pairs:
            return None
        d = [p.identity_distance for p in self.pairs]
        return {"mean": statistics.fmean(d), "median": statistics.median(d), "min": min(d), "max": max(d)}

    def agreement_rates(self) -> Optional[dict[str, float]]:
        if not self.pairs:
            return None
        n = len(self.pairs)
        return {f: sum(p.matches()[f] for p in self.pairs) / n for f in ATTRIBUTE_FIELDS}

    def to_dict(self) -> dict:
        out = {
            "pair_count": self.pair_count,
            "skipped_faces": self.skipped_faces,
            "age_tolerance": self.age_tolerance,
        }
        stats = self.distance_stats()
        if stats is not None:
            out["distance"] = stats
        rates = self.agreement_rates()
        if rates is not None:
            out["agreement"] = rates
        out["pairs"] = [asdict(p) for p in self.pairs]
        out["errors"] = [asdict(e) for e in self.errors]
        return out


def compare_face(
    original: ImageRecord,
    anonymized: ImageRecord,
    box: BoundingBox,
    face_index: int,
    embedder: FaceEmbedder,
    extractor: AttributeExtractor,
    age_tolerance: int,
) -> PairRecord:
    crop_id = face_crop_id(original.id, face_index)
    before = crop_face(original, box, 0.0, crop_id)
    after = crop_face(anonymized, box, 0.0, crop_id)
    dist = identity_distance(embedder.embed(before), embedder.embed(after))
    a0 = normalize_attributes(extractor.extract(before))
    a1 = normalize_attributes(extractor.extract(after))
    return PairRecord(
        image_id=original.id,
        face_index=face_index,
        identity_distance=dist,
        age_match=abs(a0.age - a1.age) <= age_tolerance,
        gender_match=a0.gender == a1.gender,
        ethnicity_match=a0.ethnicity == a1.ethnicity,
        emotion_match=a0.emotion == a1.emotion,
    )


def evaluate_pairs(
    originals: Mapping[str, ImageRecord] | Sequence[ImageRecord],
    results: Sequence[AnonymizationResult],
    embedder: FaceEmbedder,
    extractor: AttributeExtractor,
    age_tolerance: int = 5,
) -> EvalReport:
    """Compare each anonymized face with the original at the same box.

    Faces with any other status are counted in ``skipped_faces``. A result
    without its original image produces one error entry and no pairs.
    """
    if age_tolerance < 0:
        raise ContractError("age_tolerance must be >= 0")
    if not isinstance(originals, Mapping):
        originals = {im.id: im for im in originals}
    report = EvalReport(age_tolerance=age_tolerance)
    for res in results:
        original = originals.get(res.image_id)
        if original is None or res.output is None:
            which = "original" if original is None else "anonymized"
            report.errors.append(PairError(res.image_id, None, f"missing {which} image"))
            continue
        for k, face in enumerate(res.faces):
            if face.status is not FaceStatus.ANONYMIZED:
                report.skipped_faces += 1
                continue
            try:
                report.pairs.append(
                    compare_face(original, res.output, face.detection.box, k, embedder, extractor, age_tolerance)
                )
            except Exception as exc:
                report.errors.append(PairError(res.image_id, k, f"{type(exc).__name__}: {exc}"))
    return report


def format_report(report: EvalReport) -> str:
    lines = [f"{'pairs evaluated':<22} {report.pair_count}", f"{'faces skipped':<22} {report.skipped_faces}"]
    stats = report.distance_stats()
    if stats is None:
        lines.append(f"{'identity distance':<22} n/a")
    else:
        for k in ("mean", "median", "min", "max"):
            lines.append(f"{'distance ' + k:<22} {stats[k]:.6f}")
    rates = report.agreement_rates()
    for f in ATTRIBUTE_FIELDS:
        label = f"{f} agreement" + (f" (+/-{report.age_tolerance}y)" if f == "age" else "")
        lines.append(f"{label:<22} " + ("n/a" if rates is None else f"{rates[f]:.3f}"))
    if report.errors:
        lines.append(f"{'errors':<22} {len(report.errors)}")
    return "\n".join(lines)

