"""Line-delimited JSON run manifest.

The first line is a header ``{"schema": "anonypipe-manifest", "version": 1, ...}``.
Every following line is one image entry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .types import BoundingBox, FaceAttributes, FaceDetection, FaceRecord, FaceStatus

SCHEMA = "anonypipe-manifest"
VERSION = 1
MANIFEST_NAME = "manifest.jsonl"


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestFace:
    box: tuple[int, int, int, int]
    status: FaceStatus
    confidence: float
    prompt: Optional[str] = None
    seed: Optional[int] = None
    attributes: Optional[FaceAttributes] = None
    error: Optional[str] = None

    @classmethod
    def from_record(cls, rec: FaceRecord) -> "ManifestFace":
        b = rec.detection.box
        return cls((b.x, b.y, b.w, b.h), rec.status, rec.detection.confidence, rec.prompt, rec.seed, rec.attributes, rec.error)

    def to_record(self) -> FaceRecord:
        det = FaceDetection(BoundingBox(*self.box), self.confidence)
        return FaceRecord(det, self.status, self.attributes, self.prompt, self.seed, self.error)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "box": list(self.box),
            "status": self.status.value,
            "confidence": self.confidence,
            "prompt": self.prompt,
            "seed": self.seed,
            "attributes": None if self.attributes is None else self.attributes.to_dict(),
        }
        if self.error is not None:
            out["error"] = self.error
        return out

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "ManifestFace":
        box = d["box"]
        if not (isinstance(box, list) and len(box) == 4 and all(isinstance(v, int) for v in box)):
            raise ManifestError(f"bad box {box!r}")
        attrs = d.get("attributes")
        return cls(
            box=tuple(box),
            status=FaceStatus(d["status"]),
            confidence=float(d["confidence"]),
            prompt=d.get("prompt"),
            seed=d.get("seed"),
            attributes=None if attrs is None else FaceAttributes(**attrs),
            error=d.get("error"),
        )


@dataclass(frozen=True)
class ManifestEntry:
    """One processed image. Paths are POSIX and relative to the run directory."""

    image_id: str
    source_path: str
    output_path: Optional[str]
    faces: tuple[ManifestFace, ...] = ()
    error: Optional[str] = None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "image_id": self.image_id,
            "source_path": self.source_path,
            "output_path": self.output_path,
            "faces": [f.to_json() for f in self.faces],
        }
        if self.error is not None:
            out["error"] = self.error
        return out

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "ManifestEntry":
        return cls(
            image_id=d["image_id"],
            source_path=d["source_path"],
            output_path=d.get("output_path"),
            faces=tuple(ManifestFace.from_json(f) for f in d.get("faces", [])),
            error=d.get("error"),
        )


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...] = ()
    config: dict[str, Any] = field(default_factory=dict)

    def face_count(self) -> int:
        return sum(len(e.faces) for e in self.entries)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def header_line(config: dict[str, Any]) -> str:
    return _dump({"schema": SCHEMA, "version": VERSION, "config": config}) + "\n"


def entry_line(entry: ManifestEntry) -> str:
    return _dump(entry.to_json()) + "\n"


def serialize(manifest: Manifest) -> str:
    return header_line(manifest.config) + "".join(entry_line(e) for e in manifest.entries)


def parse(text: str) -> Manifest:
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise ManifestError("manifest is empty; expected a header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ManifestError(f"bad manifest header: {exc}") from None
    if not isinstance(header, dict) or header.get("schema") != SCHEMA:
        raise ManifestError(f"not an {SCHEMA} file")
    if header.get("version") != VERSION:
        raise ManifestError(f"unsupported manifest version {header.get('version')!r}")
    entries = []
    for n, line in enumerate(lines[1:], 2):
        try:
            entries.append(ManifestEntry.from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ManifestError(f"line {n}: {exc}") from None
    return Manifest(tuple(entries), header.get("config", {}))


def read_manifest(path) -> Manifest:
    return parse(Path(path).read_text(encoding="utf-8"))


def write_manifest(manifest: Manifest, path) -> None:
    Path(path).write_text(serialize(manifest), encoding="utf-8")
