"""
Tests for the transform registry, pixel operations and the per-sample random stream.
"""
import math
import os
import tempfile
import unittest

import numpy as np
from PIL import Image as PILImage
from scipy import stats

from entaug.augmentation.transforms import (
    ALL_KINDS, AUGMENTATION_SPACE, TRANSFORM_REGISTRY, AugRng, TransformKind, apply, apply_signed,
    auto_contrast, brightness, equalize, posterize, preview_filename, rotate, sample_transform,
    save_ppm, shear_x, solarize, translate_x, translate_y,
)
from entaug.exceptions import InvalidInputError


def random_image(seed: int, h: int = 9, w: int = 11, c: int = 3) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 256, size=(h, w, c), dtype=np.uint8)


class TestRegistry(unittest.TestCase):
    def test_fourteen_operations(self):
        self.assertEqual(len(AUGMENTATION_SPACE), 14)
        self.assertEqual(len(set(ALL_KINDS)), 14)
        magnitude_kinds = [spec for spec in AUGMENTATION_SPACE if spec.uses_magnitude]
        self.assertEqual(len(magnitude_kinds), 11)

    def test_symmetric_flags(self):
        symmetric = {spec.kind for spec in AUGMENTATION_SPACE if spec.symmetric}
        self.assertEqual(symmetric, {
            TransformKind.ROTATE, TransformKind.TRANSLATE_X, TransformKind.TRANSLATE_Y,
            TransformKind.SHEAR_X, TransformKind.SHEAR_Y,
        })

    def test_strengths(self):
        self.assertEqual(TRANSFORM_REGISTRY[TransformKind.ROTATE].strength(1.0, -1), -30.0)
        self.assertAlmostEqual(TRANSFORM_REGISTRY[TransformKind.TRANSLATE_X].strength(0.5), 5.0)
        self.assertAlmostEqual(TRANSFORM_REGISTRY[TransformKind.SHEAR_Y].strength(1.0), 0.3)
        self.assertAlmostEqual(TRANSFORM_REGISTRY[TransformKind.COLOR].strength(1.0, 1), 1.9)
        self.assertAlmostEqual(TRANSFORM_REGISTRY[TransformKind.COLOR].strength(1.0, -1), 0.1)
        self.assertEqual(TRANSFORM_REGISTRY[TransformKind.SOLARIZE].strength(0.5), 128.0)
        self.assertEqual(TRANSFORM_REGISTRY[TransformKind.SOLARIZE].strength(0.0), 256.0)
        self.assertEqual(TRANSFORM_REGISTRY[TransformKind.POSTERIZE].strength(1.0), 4.0)
        self.assertEqual(TRANSFORM_REGISTRY[TransformKind.POSTERIZE].strength(0.5), 6.0)


class TestTransformContracts(unittest.TestCase):
    def setUp(self):
        self.images = [random_image(seed) for seed in range(4)] + [random_image(9, 28, 28, 1)]

    def test_identity_at_zero_magnitude(self):
        for spec in AUGMENTATION_SPACE:
            if not spec.uses_magnitude:
                continue
            for img in self.images:
                for sign in (1, -1):
                    out = apply_signed(spec, img, 0.0, sign)
                    np.testing.assert_array_equal(out, img, err_msg=spec.kind.value)

    def test_solarize_full_magnitude_is_involution(self):
        spec = TRANSFORM_REGISTRY[TransformKind.SOLARIZE]
        for img in self.images:
            once = apply_signed(spec, img, 1.0)
            np.testing.assert_array_equal(once, 255 - img)
            np.testing.assert_array_equal(apply_signed(spec, once, 1.0), img)

    def test_posterize_idempotent(self):
        spec = TRANSFORM_REGISTRY[TransformKind.POSTERIZE]
        for m in (0.25, 0.5, 1.0):
            for img in self.images:
                once = apply_signed(spec, img, m)
                np.testing.assert_array_equal(apply_signed(spec, once, m), once)

    def test_outputs_keep_shape_and_dtype(self):
        for spec in AUGMENTATION_SPACE:
            for img in self.images:
                out = apply(spec, img, 0.8, AugRng(1, 2, 3))
                self.assertEqual(out.shape, img.shape)
                self.assertEqual(out.dtype, np.uint8)

    def test_deterministic_under_seed_triple(self):
        img = self.images[0]
        for kind in ALL_KINDS:
            spec = TRANSFORM_REGISTRY[kind]
            a = apply(spec, img, 0.6, AugRng(7, 3, 11))
            b = apply(spec, img, 0.6, AugRng(7, 3, 11))
            np.testing.assert_array_equal(a, b)

    def test_input_not_modified(self):
        img = self.images[1]
        before = img.copy()
        for spec in AUGMENTATION_SPACE:
            apply(spec, img, 1.0, AugRng(0, 0, 0))
        np.testing.assert_array_equal(img, before)

    def test_invalid_inputs(self):
        spec = TRANSFORM_REGISTRY[TransformKind.ROTATE]
        with self.assertRaises(InvalidInputError):
            apply_signed(spec, self.images[0], 1.5)
        with self.assertRaises(InvalidInputError):
            apply_signed(spec, self.images[0], -0.1)
        with self.assertRaises(InvalidInputError):
            apply_signed(spec, self.images[0].astype(np.float32), 0.5)
        with self.assertRaises(InvalidInputError):
            apply_signed(spec, np.zeros((4, 4, 2), dtype=np.uint8), 0.5)
        with self.assertRaises(InvalidInputError):
            apply_signed(spec, self.images[0], 0.5, sign=0)


class TestPixelOperations(unittest.TestCase):
    def test_rotate_quarter_turn_matches_rot90(self):
        img = random_image(3, 7, 7, 3)
        np.testing.assert_array_equal(rotate(img, 90.0), np.rot90(img, 1, axes=(0, 1)))

    def test_rotate_matches_pointwise_inverse_mapping(self):
        img = random_image(11, 7, 9, 1)
        out = apply_signed(TRANSFORM_REGISTRY[TransformKind.ROTATE], img, 1.0, sign=1, fill=0)
        theta = math.radians(30.0)
        cos, sin = math.cos(theta), math.sin(theta)
        cx, cy = 4.0, 3.0
        expected = np.zeros_like(img)
        for y in range(7):
            for x in range(9):
                sx = cx + cos * (x - cx) - sin * (y - cy)
                sy = cy + sin * (x - cx) + cos * (y - cy)
                ix, iy = math.floor(sx + 0.5), math.floor(sy + 0.5)
                if 0 <= ix < 9 and 0 <= iy < 7:
                    expected[y, x] = img[iy, ix]
        np.testing.assert_array_equal(out, expected)
        self.assertFalse(np.array_equal(out, img))

    def test_translate_fills_vacated_pixels(self):
        img = random_image(4, 6, 8, 1)
        out = translate_x(img, 2.0, fill=128)
        np.testing.assert_array_equal(out[:, 2:], img[:, :-2])
        self.assertTrue(np.all(out[:, :2] == 128))
        out = translate_y(img, -3.0, fill=7)
        np.testing.assert_array_equal(out[:-3], img[3:])
        self.assertTrue(np.all(out[-3:] == 7))

    def test_shear_keeps_first_row(self):
        img = random_image(5, 6, 6, 1)
        out = shear_x(img, 0.3)
        np.testing.assert_array_equal(out[0], img[0])

    def test_auto_contrast_stretches(self):
        img = np.array([[[50], [75]], [[100], [60]]], dtype=np.uint8)
        out = auto_contrast(img)
        self.assertEqual(out.min(), 0)
        self.assertEqual(out.max(), 255)
        flat = np.full((3, 3, 1), 42, dtype=np.uint8)
        np.testing.assert_array_equal(auto_contrast(flat), flat)

    def test_equalize_constant_image_unchanged(self):
        flat = np.full((5, 5, 3), 200, dtype=np.uint8)
        np.testing.assert_array_equal(equalize(flat), flat)

    def test_equalize_spreads_two_levels(self):
        img = np.zeros((32, 32, 1), dtype=np.uint8)
        img[16:] = 10
        out = equalize(img)
        self.assertEqual(int(out[0, 0, 0]), 0)
        self.assertEqual(int(out[16, 0, 0]), 255)

    def test_brightness_zero_is_black(self):
        img = random_image(6)
        self.assertTrue(np.all(brightness(img, 0.0) == 0))

    def test_solarize_threshold(self):
        img = np.array([[[10], [200]]], dtype=np.uint8)
        np.testing.assert_array_equal(solarize(img, 128), [[[10], [55]]])

    def test_posterize_bits(self):
        img = np.array([[[0b10110111]]], dtype=np.uint8)
        self.assertEqual(int(posterize(img, 4)[0, 0, 0]), 0b10110000)


class TestAugRng(unittest.TestCase):
    def test_same_triple_same_stream(self):
        a, b = AugRng(1, 2, 3), AugRng(1, 2, 3)
        self.assertEqual([a.integers(0, 100) for _ in range(5)], [b.integers(0, 100) for _ in range(5)])

    def test_different_epochs_differ(self):
        draws_a = [AugRng(0, 0, 5).uniform() for _ in range(1)]
        draws_b = [AugRng(0, 1, 5).uniform() for _ in range(1)]
        self.assertNotEqual(draws_a, draws_b)

    def test_kind_draws_are_uniform(self):
        index = {kind: i for i, kind in enumerate(ALL_KINDS)}
        counts = np.zeros(len(ALL_KINDS), dtype=np.int64)
        for i in range(14000):
            counts[index[sample_transform(AugRng(0, 0, i))]] += 1
        self.assertGreater(stats.chisquare(counts).pvalue, 0.001)

    def test_stream_is_pcg64_over_the_seed_triple(self):
        rng = AugRng(7, 3, 11)
        gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([7, 3, 11])))
        self.assertEqual(sample_transform(rng), ALL_KINDS[int(gen.integers(0, 14))])
        self.assertEqual(rng.uniform(), float(gen.random()))
        self.assertEqual(rng.integers(0, 40), int(gen.integers(0, 40)))

    def test_neighbouring_samples_do_not_share_prefixes(self):
        a, b = AugRng(0, 0, 1), AugRng(0, 0, 2)
        self.assertNotEqual([a.uniform() for _ in range(100)], [b.uniform() for _ in range(100)])

    def test_negative_seed_rejected(self):
        with self.assertRaises(InvalidInputError):
            AugRng(-1, 0, 0)

    def test_sampling_covers_space(self):
        seen = {sample_transform(AugRng(0, 0, i)) for i in range(500)}
        self.assertEqual(seen, set(ALL_KINDS))

    def test_restricted_space(self):
        for i in range(20):
            self.assertEqual(sample_transform(AugRng(0, 0, i), [TransformKind.ROTATE]), TransformKind.ROTATE)


class TestPreview(unittest.TestCase):
    def test_filename(self):
        self.assertEqual(preview_filename("train", 3, TransformKind.SHEAR_X, 0.4567), "train_3_shear_x_457.ppm")

    def test_save_ppm_grayscale_replicated(self):
        img = random_image(8, 5, 4, 1)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "sub", "x.ppm")
            save_ppm(img, path)
            with open(path, "rb") as f:
                self.assertEqual(f.read(2), b"P6")
            with PILImage.open(path) as loaded:
                arr = np.asarray(loaded)
            np.testing.assert_array_equal(arr, np.repeat(img, 3, axis=2))


if __name__ == "__main__":
    unittest.main()
