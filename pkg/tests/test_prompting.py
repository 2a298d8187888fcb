import itertools

import pytest

from anonypipe.prompting import (
    DEFAULT_EMOTION_NOUNS,
    DEFAULT_TEMPLATE,
    PromptTemplate,
    build_prompt,
    merged_emotion_nouns,
)
from anonypipe.types import EMOTIONS, ETHNICITIES, GENDERS, ContractError, FaceAttributes


def test_reference_prompt():
    attrs = FaceAttributes(32, "Man", "latino hispanic", "sad")
    assert build_prompt(attrs) == "32-year-old Latino Hispanic Man with the emotion of sadness."


@pytest.mark.parametrize(
    "attrs, expected",
    [
        (FaceAttributes(1, "Woman", "asian", "neutral"), "1-year-old Asian Woman with the emotion of neutrality."),
        (FaceAttributes(45, "Man", "middle eastern", "happy"), "45-year-old Middle Eastern Man with the emotion of happiness."),
    ],
)
def test_hand_substitutions(attrs, expected):
    assert build_prompt(attrs) == expected


def test_cross_product_renders():
    seen = set()
    for g, e, m in itertools.product(GENDERS, ETHNICITIES, EMOTIONS):
        text = build_prompt(FaceAttributes(40, g, e, m))
        assert text and "{" not in text and "}" not in text
        seen.add(text)
    assert len(seen) == 84


def test_all_ages_render():
    for age in range(1, 121):
        assert build_prompt(FaceAttributes(age, "Woman", "black", "fear")).startswith(f"{age}-year-old ")


def test_noun_map_total():
    assert set(DEFAULT_EMOTION_NOUNS) == set(EMOTIONS)
    assert all(DEFAULT_EMOTION_NOUNS.values())


def test_custom_template_and_nouns():
    t = PromptTemplate("portrait of a {emotion_noun} {gender}, {ethnicity}, age {age}")
    nouns = merged_emotion_nouns({"sad": "melancholy"})
    assert build_prompt(FaceAttributes(20, "Woman", "white", "sad"), t, nouns) == "portrait of a melancholy Woman, White, age 20"


@pytest.mark.parametrize(
    "template",
    [
        "{age} {gender} {emotion_noun}",
        "{age} {age} {ethnicity} {gender} {emotion_noun}",
        "{age} {ethnicity} {gender} {emotion_noun} {name}",
        "{age} {ethnicity} {gender} {emotion_noun} {{x}}",
        "{age:03d} {ethnicity} {gender} {emotion_noun}",
        "{age {ethnicity}",
    ],
)
def test_bad_templates(template):
    with pytest.raises(ContractError):
        PromptTemplate(template)


def test_bad_noun_overrides():
    with pytest.raises(ContractError):
        merged_emotion_nouns({"bored": "boredom"})
    with pytest.raises(ContractError):
        merged_emotion_nouns({"sad": ""})


def test_missing_noun_is_error():
    with pytest.raises(ContractError):
        build_prompt(FaceAttributes(3, "Man", "white", "sad"), PromptTemplate(DEFAULT_TEMPLATE), {"happy": "joy"})
