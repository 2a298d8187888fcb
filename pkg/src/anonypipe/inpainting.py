"""Inpainting backend interface, resolution gate, compositing and mock backends."""

from __future__ import annotations

import base64
import hashlib
import io
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Protocol

import numpy as np
from scipy import ndimage

from .detection import BinaryMask
from .types import BoundingBox, ContractError, ImageRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InpaintParams:
    # Conventional diffusion defaults, surfaced in config.
    steps: int = 50
    guidance_scale: float = 7.5
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.steps, bool) or not isinstance(self.steps, int) or self.steps < 1:
            raise ContractError(f"steps must be an int >= 1, got {self.steps!r}")
        if not float(self.guidance_scale) > 0:
            raise ContractError(f"guidance_scale must be > 0, got {self.guidance_scale!r}")


@dataclass(frozen=True)
class BlendMode:
    """``hard`` when ``radius`` is 0, otherwise a feathered edge ``radius`` px wide."""

    radius: int = 0

    def __post_init__(self):
        if isinstance(self.radius, bool) or not isinstance(self.radius, int) or self.radius < 0:
            raise ContractError(f"feather radius must be an int >= 0, got {self.radius!r}")

    @property
    def kind(self) -> str:
        return "hard" if self.radius == 0 else "feathered"

    @classmethod
    def parse(cls, text: str) -> "BlendMode":
        text = str(text).strip()
        if text == "hard":
            return cls(0)
        kind, _, radius = text.partition(":")
        if kind == "feathered" and radius.isdigit():
            return cls(int(radius))
        raise ContractError(f"blend_mode must be 'hard' or 'feathered:<radius>', got {text!r}")

    def __str__(self):
        return "hard" if self.radius == 0 else f"feathered:{self.radius}"


HARD = BlendMode(0)


class InpaintBackend(Protocol):
    def inpaint(
        self, image: ImageRecord, mask: BinaryMask, prompt: str, seed: int, params: InpaintParams
    ) -> ImageRecord:
        """Return an image of identical size with the masked region regenerated."""
        ...


def resolution_gate(box: BoundingBox, min_side: int) -> bool:
    """True when both sides of ``box`` reach ``min_side`` pixels."""
    if min_side < 1:
        raise ContractError(f"min_side must be >= 1, got {min_side}")
    return min(box.w, box.h) >= min_side


def feather_weights(mask: BinaryMask, radius: int) -> np.ndarray:
    """Per-pixel weight of the generated image.

    Zero outside the mask. Inside, a pixel at chessboard distance ``d`` from
    the nearest unmasked pixel gets ``min(1, d / (radius + 1))``, so only the
    outer ``radius`` rings of the mask are cross-faded.
    """
    inside = mask.as_bool()
    if radius == 0 or inside.all() or not inside.any():
        return inside.astype(np.float64)
    dist = ndimage.distance_transform_cdt(inside, metric="chessboard").astype(np.float64)
    return np.minimum(1.0, dist / (radius + 1)) * inside


def composite(
    working: ImageRecord, generated: ImageRecord, mask: BinaryMask, mode: BlendMode = HARD
) -> ImageRecord:
    """Merge ``generated`` into ``working`` inside ``mask`` only."""
    shape = (working.height, working.width)
    if (generated.height, generated.width) != shape or mask.shape != shape:
        raise ContractError(
            f"composite needs congruent inputs: working {shape}, "
            f"generated {(generated.height, generated.width)}, mask {mask.shape}"
        )
    inside = mask.as_bool()
    out = working.pixels.copy()
    if mode.radius == 0:
        out[inside] = generated.pixels[inside]
        return working.with_pixels(out)
    alpha = feather_weights(mask, mode.radius)[inside][:, None]
    blend = alpha * generated.pixels[inside].astype(np.float64) + (1.0 - alpha) * working.pixels[inside]
    out[inside] = np.clip(np.rint(blend), 0, 255).astype(np.uint8)
    return working.with_pixels(out)


@dataclass
class InpaintCall:
    image: ImageRecord
    mask: BinaryMask
    prompt: str
    seed: int
    params: InpaintParams


class IdentityBackend:
    """Returns its input unchanged and logs every call."""

    def __init__(self):
        self.calls: list[InpaintCall] = []

    def inpaint(self, image, mask, prompt, seed, params):
        self.calls.append(InpaintCall(image.copy(), mask, prompt, seed, params))
        return image.copy()


def prompt_digest(prompt: str) -> int:
    return int.from_bytes(hashlib.sha256(prompt.encode("utf-8")).digest()[:8], "big")


class SeededNoiseBackend:
    """Fills the mask with noise determined by ``(seed, prompt)`` alone.

    PCG64 streams are stable across platforms and numpy versions, so the
    output is reproducible byte for byte.
    """

    def __init__(self):
        self.calls: list[InpaintCall] = []

    def inpaint(self, image, mask, prompt, seed, params):
        self.calls.append(InpaintCall(image.copy(), mask, prompt, seed, params))
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), prompt_digest(prompt)])))
        noise = rng.integers(0, 256, size=image.pixels.shape, dtype=np.uint8)
        out = image.pixels.copy()
        inside = mask.as_bool()
        out[inside] = noise[inside]
        return image.with_pixels(out)


class FailingBackend:
    """Raises on every call. For exercising error isolation."""

    def __init__(self, message: str = "backend failure"):
        self.message = message
        self.calls = 0

    def inpaint(self, image, mask, prompt, seed, params):
        self.calls += 1
        raise RuntimeError(self.message)


def encode_png(pixels: np.ndarray) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png(data: str) -> np.ndarray:
    from PIL import Image

    with Image.open(io.BytesIO(base64.b64decode(data))) as im:
        return np.asarray(im.convert("RGB"))


class ExternalBackend:
    """Client for an inpainting service reached over HTTP.

    POSTs JSON ``{image, mask, prompt, seed, steps, guidance_scale, extra}``
    with PNG payloads in base64 and expects ``{"image": <base64 PNG>}`` back.
    Responses at another resolution are resized to the input size.
    """

    def __init__(
        self,
        endpoint: str,
        model: Optional[str] = None,
        timeout: float = 600.0,
        client=None,
    ):
        import httpx

        if not endpoint:
            raise ContractError("external backend needs an endpoint")
        self.endpoint = endpoint
        self.model = model
        self._client = client or httpx.Client(timeout=timeout)

    def inpaint(self, image, mask, prompt, seed, params):
        payload = {
            "image": encode_png(image.pixels),
            "mask": encode_png(mask.values * np.uint8(255)),
            "prompt": prompt,
            "seed": int(seed),
            "steps": params.steps,
            "guidance_scale": float(params.guidance_scale),
            "extra": dict(params.extra),
        }
        if self.model:
            payload["model"] = self.model
        resp = self._client.post(self.endpoint, json=payload)
        resp.raise_for_status()
        pixels = decode_png(resp.json()["image"])
        if pixels.shape[:2] != (image.height, image.width):
            from PIL import Image

            logger.debug("resizing backend output %s to %s", pixels.shape[:2], (image.height, image.width))
            pixels = np.asarray(Image.fromarray(pixels).resize((image.width, image.height), Image.LANCZOS))
        return image.with_pixels(np.ascontiguousarray(pixels, dtype=np.uint8))
