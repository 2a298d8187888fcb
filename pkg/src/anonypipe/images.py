"""Image discovery, loading and format-preserving saving."""

from __future__ import annotations

import os
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .types import ImageRecord

IMAGE_EXTENSIONS = {".png": "PNG", ".jpg": "JPEG", ".jpeg": "JPEG"}
JPEG_QUALITY = 95


@dataclass(frozen=True)
class ImageSource:
    """A lazily loaded input. ``id`` is the POSIX path relative to the input root."""

    id: str
    path: Path

    def load(self) -> ImageRecord:
        return load_image(self.path, self.id)


def load_image(path, image_id: str | None = None) -> ImageRecord:
    path = Path(path)
    with Image.open(path) as im:
        pixels = np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    return ImageRecord(image_id or path.name, pixels, str(path))


def image_format(path) -> str:
    try:
        return IMAGE_EXTENSIONS[Path(path).suffix.lower()]
    except KeyError:
        raise ValueError(f"unsupported image type: {path}") from None


def save_image(pixels: np.ndarray, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = fmt or image_format(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    im = Image.fromarray(pixels, mode="RGB")
    if fmt == "JPEG":
        im.save(path, format="JPEG", quality=JPEG_QUALITY)
    else:
        im.save(path, format=fmt)


def write_output(record: ImageRecord, original: ImageRecord, path) -> None:
    """Save ``record`` in the source's container format.

    When no pixel changed the source file is copied verbatim, so untouched
    JPEGs do not pay a second lossy encode.
    """
    path = Path(path)
    if (
        original.source_path
        and Path(original.source_path).exists()
        and np.array_equal(record.pixels, original.pixels)
    ):
        path.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(original.source_path, path)
        return
    save_image(record.pixels, path, image_format(original.source_path or path))


def discover_inputs(root) -> list[ImageSource]:
    """List PNG/JPEG inputs under a directory, or the paths named in a list file.

    List files hold one path per line, relative paths being resolved against
    the list file's directory. Results are sorted by id.
    """
    root = Path(root)
    sources = []
    if root.is_dir():
        for dirpath, dirnames, filenames in os.walk(root):
            dirnames.sort()
            for name in filenames:
                p = Path(dirpath) / name
                if p.suffix.lower() in IMAGE_EXTENSIONS:
                    sources.append(ImageSource(p.relative_to(root).as_posix(), p))
    else:
        base = root.parent
        for line in root.read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            p = Path(line)
            if not p.is_absolute():
                p = base / p
            try:
                image_id = p.resolve().relative_to(base.resolve()).as_posix()
            except ValueError:
                image_id = p.as_posix().lstrip("/")
            sources.append(ImageSource(image_id, p))
    sources.sort(key=lambda s: s.id)
    seen = set()
    for s in sources:
        if s.id in seen:
            raise ValueError(f"duplicate image id {s.id!r}")
        seen.add(s.id)
    return sources
