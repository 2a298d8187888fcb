from pathlib import Path

import pytest

from anonypipe.config import ConfigError, PipelineConfig, SeedPolicy, load_config
from anonypipe.inpainting import BlendMode
from anonypipe.prompting import DEFAULT_TEMPLATE


def test_defaults():
    cfg = load_config({"input": "in", "output": "out"}, env={})
    p = cfg.pipeline
    assert (p.min_face_side, p.detection_confidence_threshold, p.mask_padding_ratio) == (100, 0.5, 0.0)
    assert p.seed_policy == SeedPolicy() and p.blend_mode == BlendMode(0)
    assert p.prompt_template == DEFAULT_TEMPLATE
    assert (p.inpaint_params.steps, p.inpaint_params.guidance_scale) == (50, 7.5)
    assert cfg.input == Path("in") and cfg.workers == 1 and cfg.inpaint_backend == "identity"


def test_precedence(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("min_face_side = 50\nworkers = 3\nmask_padding_ratio = 0.2\n")
    env = {"ANONYPIPE_MIN_FACE_SIDE": "64", "ANONYPIPE_WORKERS": "2"}
    cfg = load_config({"min_face_side": 80}, env=env, file_path=f)
    assert cfg.pipeline.min_face_side == 80
    assert cfg.workers == 2
    assert cfg.pipeline.mask_padding_ratio == 0.2
    assert load_config({}, env=env, file_path=f).pipeline.min_face_side == 64


def test_env_names_config_file(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text('[anonypipe]\nblend_mode = "feathered:3"\nseed_policy = "fixed:7"\n')
    cfg = load_config({}, env={"ANONYPIPE_CONFIG": str(f)})
    assert cfg.pipeline.blend_mode == BlendMode(3)
    assert cfg.pipeline.seed_policy == SeedPolicy.fixed(7)


def test_tables_from_file(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text(
        'prompt_template = "{emotion_noun}: {age} {ethnicity} {gender}"\n'
        "[emotion_nouns]\nsad = \"sorrow\"\n[extra]\nscheduler = \"ddim\"\n"
    )
    p = load_config({}, env={}, file_path=f).pipeline
    assert p.emotion_nouns["sad"] == "sorrow" and p.emotion_nouns["happy"] == "happiness"
    assert dict(p.inpaint_params.extra) == {"scheduler": "ddim"}


def test_negative_padding_in_file(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("mask_padding_ratio = -1\n")
    with pytest.raises(ConfigError, match="mask_padding_ratio"):
        load_config({}, env={}, file_path=f)


def test_unknown_key_lists_valid(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("min_face = 3\n")
    with pytest.raises(ConfigError, match="valid keys: .*min_face_side"):
        load_config({}, env={}, file_path=f)
    with pytest.raises(ConfigError, match="unknown"):
        load_config({}, env={"ANONYPIPE_BOGUS": "1"})


@pytest.mark.parametrize(
    "flags, field",
    [
        ({"min_face_side": 0}, "min_face_side"),
        ({"detection_confidence_threshold": 1.5}, "detection_confidence_threshold"),
        ({"workers": 0}, "workers"),
        ({"prompt_template": "{age} only"}, "placeholder|emotion_noun|ethnicity"),
        ({"blend_mode": "soft"}, "blend_mode"),
        ({"inpaint_backend": "external"}, "external_endpoint"),
        ({"steps": 0}, "steps"),
        ({"min_face_side": "abc"}, "min_face_side"),
        ({"min_face_side": 10.5}, "min_face_side"),
    ],
)
def test_invariant_violations(flags, field):
    with pytest.raises(ConfigError, match=field):
        load_config(flags, env={})


def test_env_bool_and_bad_bool():
    assert load_config({}, env={"ANONYPIPE_EMIT_MASKS": "yes"}).emit_masks is True
    with pytest.raises(ConfigError):
        load_config({}, env={"ANONYPIPE_EMIT_MASKS": "maybe"})


def test_check_paths(tmp_path):
    cfg = load_config({"input": tmp_path / "nope", "output": tmp_path / "o"}, env={})
    with pytest.raises(ConfigError, match="does not exist"):
        cfg.check_paths()
    with pytest.raises(ConfigError, match="input path is required"):
        load_config({}, env={}).check_paths()
    with pytest.raises(ConfigError, match="differ"):
        load_config({"input": tmp_path, "output": tmp_path}, env={}).check_paths()


def test_pipeline_config_direct_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(mask_padding_ratio=-0.1)
