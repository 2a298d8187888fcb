import numpy as np
import pytest

from anonypipe.attributes import StubExtractor
from anonypipe.config import PipelineConfig, SeedPolicy, derive_seed
from anonypipe.detection import StubDetector, mask_union
from anonypipe.images import ImageSource, save_image
from anonypipe.inpainting import FailingBackend, IdentityBackend, SeededNoiseBackend
from anonypipe.pipeline import anonymize_batch, anonymize_image, face_mask, processing_order
from anonypipe.types import BoundingBox, FaceAttributes, FaceStatus, ImageRecord

from conftest import DEFAULT_ATTRS, det, random_image, stub_backends
from helpers_backends import FlakyBackend, PaintBackend

CFG = PipelineConfig()


def test_derive_seed():
    assert derive_seed(SeedPolicy.fixed(42), "anything", 7) == 42
    p = SeedPolicy()
    a, b = derive_seed(p, "img1", 0), derive_seed(p, "img1", 1)
    assert a != b
    assert derive_seed(p, "img1", 0) == a
    assert 0 <= a < 2**32
    assert derive_seed(p, "img2", 0) != a


def test_seed_policy_parse():
    assert SeedPolicy.parse("fixed:9") == SeedPolicy.fixed(9)
    assert SeedPolicy.parse(9) == SeedPolicy.fixed(9)
    assert SeedPolicy.parse("per_face_derived") == SeedPolicy()
    for bad in ("fixed:-1", "fixed", "random", -3):
        with pytest.raises(ValueError):
            SeedPolicy.parse(bad)


def test_no_detections(rng):
    im = random_image(rng, 50, 60)
    res = anonymize_image(im, CFG, *stub_backends({}, IdentityBackend()))
    assert res.faces == [] and res.output == im


def test_small_face_skipped(rng):
    im = random_image(rng, 200, 200)
    be = PaintBackend()
    res = anonymize_image(im, CFG, *stub_backends({"img": [det(10, 10, 50, 50)]}, be))
    assert [f.status for f in res.faces] == [FaceStatus.SKIPPED_LOW_RESOLUTION]
    assert res.output == im and be.inputs == []


def test_two_faces_identity(rng):
    im = random_image(rng, 300, 400)
    be = IdentityBackend()
    res = anonymize_image(im, CFG, *stub_backends({"img": [det(0, 0, 120, 120), det(200, 100, 150, 150)]}, be))
    assert res.output == im
    assert [f.status for f in res.faces] == [FaceStatus.ANONYMIZED] * 2
    assert len(be.calls) == 2
    assert all(f.prompt == "32-year-old Latino Hispanic Man with the emotion of sadness." for f in res.faces)


def test_processing_order():
    dets = [det(0, 50, 10, 10), det(0, 0, 20, 20), det(30, 0, 10, 10), det(5, 0, 10, 10), det(500, 500, 5, 5)]
    order = processing_order(dets, 100, 100)
    assert [(d.box.x, d.box.y, ok) for d, ok in order] == [
        (0, 0, True), (5, 0, True), (30, 0, True), (0, 50, True), (500, 500, False)
    ]


def test_sequential_working_image(rng):
    im = random_image(rng, 300, 300)
    faces = [det(10, 10, 150, 150), det(100, 100, 120, 120), det(150, 20, 110, 110)]
    be = PaintBackend()
    res = anonymize_image(im, CFG, *stub_backends({"img": faces}, be))
    assert len(be.inputs) == 3
    working = im.pixels.copy()
    for k in range(3):
        np.testing.assert_array_equal(be.inputs[k], working)
        m = be.masks[k].as_bool()
        working[m] = be.outputs[k][m]
    np.testing.assert_array_equal(res.output.pixels, working)


def test_backend_output_outside_mask_ignored(rng):
    im = random_image(rng, 200, 200)
    be = PaintBackend(perturb_outside=True)
    res = anonymize_image(im, CFG, *stub_backends({"img": [det(20, 30, 100, 110)]}, be))
    outside = ~be.masks[0].as_bool()
    np.testing.assert_array_equal(res.output.pixels[outside], im.pixels[outside])


def test_backend_cannot_mutate_working_image(rng):
    class Mutator:
        def inpaint(self, image, mask, prompt, seed, params):
            image.pixels[:] = 0
            return image

    im = random_image(rng, 150, 150)
    res = anonymize_image(im, CFG, *stub_backends({"img": [det(0, 0, 100, 100)]}, Mutator()))
    mask = face_mask(res.faces[0], CFG, 150, 150).as_bool()
    np.testing.assert_array_equal(res.output.pixels[~mask], im.pixels[~mask])
    assert not res.output.pixels[mask].any()


def test_failure_isolated(rng):
    im = random_image(rng, 300, 300)
    faces = [det(0, 0, 140, 140), det(150, 150, 120, 120)]
    res = anonymize_image(im, CFG, *stub_backends({"img": faces}, FlakyBackend({1})))
    assert [f.status for f in res.faces] == [FaceStatus.BACKEND_FAILED, FaceStatus.ANONYMIZED]
    assert "boom" in res.faces[0].error
    assert res.faces[0].prompt is not None


def test_extractor_failure_isolated(rng):
    im = random_image(rng, 300, 300)
    ex = StubExtractor({("img", 1): DEFAULT_ATTRS})
    res = anonymize_image(im, CFG, StubDetector({"img": [det(0, 0, 140, 140), det(150, 150, 120, 120)]}), ex, IdentityBackend())
    assert [f.status for f in res.faces] == [FaceStatus.BACKEND_FAILED, FaceStatus.ANONYMIZED]
    assert res.faces[0].attributes is None


def test_bad_backend_return(rng):
    class Wrong:
        def inpaint(self, image, mask, prompt, seed, params):
            return image.pixels[:10]

    im = random_image(rng, 150, 150)
    res = anonymize_image(im, CFG, *stub_backends({"img": [det(0, 0, 100, 100)]}, Wrong()))
    assert res.faces[0].status is FaceStatus.BACKEND_FAILED
    assert res.output == im


def test_detector_failure_propagates(rng):
    class Broken:
        def detect(self, image):
            raise RuntimeError("detector down")

    with pytest.raises(RuntimeError):
        anonymize_image(random_image(rng, 10, 10), CFG, Broken(), StubExtractor(), IdentityBackend())


def test_confidence_and_out_of_frame(rng):
    im = random_image(rng, 200, 200)
    faces = [det(0, 0, 120, 120, 0.3), det(500, 500, 150, 150, 0.99), det(60, 60, 130, 130, 0.5)]
    res = anonymize_image(im, CFG, *stub_backends({"img": faces}, SeededNoiseBackend()))
    by_status = sorted(f.status.value for f in res.faces)
    assert by_status == ["anonymized", "skipped_low_confidence", "skipped_low_resolution"]
    eligible = [f for f in res.faces if f.status is not FaceStatus.SKIPPED_LOW_CONFIDENCE]
    assert len(eligible) == sum(d.confidence >= CFG.detection_confidence_threshold for d in faces)


def test_anonymized_record_contents(rng):
    im = random_image(rng, 200, 200)
    attrs = FaceAttributes(45, "Woman", "middle eastern", "happy")
    res = anonymize_image(im, CFG, StubDetector({"img": [det(-20, 10, 140, 130)]}), StubExtractor(default=attrs), IdentityBackend())
    f = res.faces[0]
    assert f.detection.box == BoundingBox(0, 10, 120, 130)
    assert f.attributes == attrs
    assert f.prompt == "45-year-old Middle Eastern Woman with the emotion of happiness."
    assert f.seed == derive_seed(CFG.seed_policy, "img", 0)


def test_padding_widens_mask(rng):
    im = random_image(rng, 300, 300)
    be = PaintBackend()
    cfg = PipelineConfig(mask_padding_ratio=0.5)
    anonymize_image(im, cfg, *stub_backends({"img": [det(100, 100, 100, 100)]}, be))
    assert be.masks[0].popcount() == 150 * 150


def test_pixel_preservation_noise(rng):
    im = random_image(rng, 400, 400)
    faces = [det(10, 10, 110, 110), det(200, 200, 150, 150), det(300, 10, 40, 40)]
    res = anonymize_image(im, CFG, *stub_backends({"img": faces}, SeededNoiseBackend()))
    masks = [face_mask(f, CFG, 400, 400) for f in res.faces if f.status is FaceStatus.ANONYMIZED]
    outside = ~mask_union(masks, 400, 400).as_bool()
    np.testing.assert_array_equal(res.output.pixels[outside], im.pixels[outside])
    assert (res.output.height, res.output.width) == (400, 400)


def test_determinism(rng):
    im = random_image(rng, 300, 300)
    table = {"img": [det(10, 10, 150, 150), det(120, 120, 130, 130)]}
    a = anonymize_image(im, CFG, *stub_backends(table, SeededNoiseBackend()))
    b = anonymize_image(im, CFG, *stub_backends(table, SeededNoiseBackend()))
    assert a.output == b.output and a.faces == b.faces


def test_batch_empty():
    r = anonymize_batch([], CFG, *stub_backends({}, IdentityBackend()))
    assert (r.images, r.faces, r.count(FaceStatus.ANONYMIZED)) == (0, 0, 0)


def test_batch_counts(rng):
    ims = [random_image(rng, 300, 400, f"i{n}") for n in range(3)]
    table = {
        "i0": [],
        "i1": [det(0, 0, 120, 120)],
        "i2": [det(0, 0, 120, 120), det(200, 100, 150, 150)],
    }
    r = anonymize_batch(ims, CFG, *stub_backends(table, IdentityBackend()))
    assert (r.images, r.faces, r.count(FaceStatus.ANONYMIZED)) == (3, 3, 3)
    assert [e.result.output for e in r.entries] == ims


def test_batch_all_fail(rng):
    im = random_image(rng, 300, 400, "only")
    be = FailingBackend()
    r = anonymize_batch([im], CFG, *stub_backends({"only": [det(0, 0, 120, 120), det(200, 100, 150, 150)]}, be))
    assert r.count(FaceStatus.ANONYMIZED) == 0
    assert r.count(FaceStatus.BACKEND_FAILED) == 2 == be.calls
    assert r.failed_images == 0


def test_batch_unreadable_input(tmp_path, rng):
    good = tmp_path / "good.png"
    save_image(random_image(rng, 20, 20).pixels, good)
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    sources = [ImageSource("bad.png", bad), ImageSource("good.png", good), ImageSource("gone.png", tmp_path / "gone.png")]
    r = anonymize_batch(sources, CFG, *stub_backends({}, IdentityBackend()))
    assert [e.error is None for e in r.entries] == [False, True, False]
    assert r.failed_images == 2
    assert "unreadable" in r.entries[0].error


def test_batch_workers_match_serial(rng):
    ims = [random_image(rng, 200, 260, f"i{n}") for n in range(8)]
    table = {im.id: [det(5, 5, 120, 110), det(130, 60, 110, 120)] for im in ims}
    serial = anonymize_batch(ims, CFG, *stub_backends(table, SeededNoiseBackend()))
    built = []

    def factory():
        b = stub_backends(table, SeededNoiseBackend())
        built.append(b)
        return b

    parallel = anonymize_batch(ims, CFG, workers=4, backend_factory=factory)
    assert [e.image_id for e in parallel.entries] == [im.id for im in ims]
    for s, p in zip(serial.entries, parallel.entries):
        assert s.result.output == p.result.output and s.result.faces == p.result.faces
    assert 1 <= len(built) <= 4


def test_batch_workers_need_factory(rng):
    with pytest.raises(ValueError):
        anonymize_batch([], CFG, *stub_backends({}, IdentityBackend()), workers=2)


def test_sink_failure_recorded(rng):
    def sink(item, image, result):
        raise OSError("disk full")

    r = anonymize_batch([random_image(rng, 5, 5, "a")], CFG, *stub_backends({}, IdentityBackend()), sink=sink)
    assert r.failed_images == 1 and "disk full" in r.entries[0].error
