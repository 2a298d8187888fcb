"""Render facial attributes into the text prompt that conditions inpainting."""

from __future__ import annotations

import string
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Optional

from .types import EMOTIONS, ContractError, FaceAttributes

PLACEHOLDERS = ("age", "ethnicity", "gender", "emotion_noun")

DEFAULT_TEMPLATE = "{age}-year-old {ethnicity} {gender} with the emotion of {emotion_noun}."

# Only sad -> sadness is attested; the rest are our picks.
DEFAULT_EMOTION_NOUNS: Mapping[str, str] = MappingProxyType(
    {
        "sad": "sadness",
        "happy": "happiness",
        "angry": "anger",
        "fear": "fear",
        "disgust": "disgust",
        "surprise": "surprise",
        "neutral": "neutrality",
    }
)


@dataclass(frozen=True)
class PromptTemplate:
    template: str = DEFAULT_TEMPLATE

    def __post_init__(self):
        validate_template(self.template)


def validate_template(template: str) -> None:
    """Require each placeholder exactly once and nothing else in braces."""
    try:
        parsed = list(string.Formatter().parse(template))
    except ValueError as exc:
        raise ContractError(f"malformed prompt template {template!r}: {exc}") from None
    if any("{" in lit or "}" in lit for lit, _, _, _ in parsed):
        raise ContractError("prompt template may not contain escaped braces")
    if any(spec or conv for _, f, spec, conv in parsed if f is not None):
        raise ContractError("prompt template placeholders take no format spec or conversion")
    fields = [f for _, f, _, _ in parsed if f is not None]
    unknown = sorted(set(fields) - set(PLACEHOLDERS))
    if unknown:
        raise ContractError(f"prompt template has unknown placeholders {unknown}; allowed: {list(PLACEHOLDERS)}")
    for name in PLACEHOLDERS:
        n = fields.count(name)
        if n != 1:
            raise ContractError(f"prompt template must contain {{{name}}} exactly once, found {n}")


def validate_emotion_nouns(nouns: Mapping[str, str]) -> None:
    missing = [e for e in EMOTIONS if not nouns.get(e)]
    if missing:
        raise ContractError(f"emotion noun map has no entry for {missing}")


def merged_emotion_nouns(overrides: Optional[Mapping[str, str]] = None) -> dict[str, str]:
    nouns = dict(DEFAULT_EMOTION_NOUNS)
    for key, value in (overrides or {}).items():
        if key not in EMOTIONS:
            raise ContractError(f"unknown emotion {key!r} in noun overrides; expected one of {EMOTIONS}")
        if not isinstance(value, str) or not value.strip():
            raise ContractError(f"emotion noun for {key!r} must be a non-empty string")
        nouns[key] = value
    return nouns


def title_label(label: str) -> str:
    return " ".join(word[:1].upper() + word[1:] for word in label.split(" "))


def build_prompt(
    attrs: FaceAttributes,
    template: PromptTemplate = PromptTemplate(),
    nouns: Mapping[str, str] = DEFAULT_EMOTION_NOUNS,
) -> str:
    """Fill ``template`` from ``attrs``.

    >>> from anonypipe.types import FaceAttributes
    >>> build_prompt(FaceAttributes(32, "Man", "latino hispanic", "sad"))
    '32-year-old Latino Hispanic Man with the emotion of sadness.'
    """
    noun = nouns.get(attrs.emotion)
    if not noun:
        raise ContractError(f"no emotion noun for {attrs.emotion!r}")
    text = template.template.format(
        age=attrs.age,
        ethnicity=title_label(attrs.ethnicity),
        gender=attrs.gender,
        emotion_noun=noun,
    )
    if not text:
        raise ContractError("prompt rendered empty")
    return text
