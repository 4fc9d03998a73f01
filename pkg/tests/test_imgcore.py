import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

from shellsig import imgcore
from shellsig.errors import ConstantImage, NoInk, OutOfBounds

import oracles


def masks(max_side=16):
    return st.tuples(st.integers(1, max_side), st.integers(1, max_side)).flatmap(
        lambda s: arrays(np.uint8, s, elements=st.integers(0, 1))
    )


class TestOtsu:
    def test_bimodal_two_levels(self):
        img = np.array([50] * 32 + [200] * 32, dtype=np.uint8).reshape(8, 8)
        mask, t = imgcore.otsu_binarize(img)
        assert 50 <= t <= 199
        assert t == 50  # every split in [50, 199] is identical; lowest wins
        np.testing.assert_array_equal(mask, (img == 50).astype(np.uint8))

    def test_constant_image_raises(self):
        with pytest.raises(ConstantImage):
            imgcore.otsu_binarize(np.full((4, 4), 128, np.uint8))

    def test_seed7_matches_brute_force(self):
        img = np.random.default_rng(7).integers(0, 256, (8, 8), dtype=np.uint8)
        assert imgcore.otsu_threshold(img) == oracles.otsu_brute_force(img)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_brute_force_small_alphabet(self, seed):
        # few distinct levels stress the lowest-threshold tie rule
        img = np.random.default_rng(seed).choice([10, 11, 90, 200, 201], (6, 6)).astype(np.uint8)
        if len(np.unique(img)) < 2:
            pytest.skip("constant draw")
        assert imgcore.otsu_threshold(img) == oracles.otsu_brute_force(img)


class TestBoundingBox:
    def test_single_pixel(self):
        m = np.zeros((8, 8), np.uint8)
        m[3, 5] = 1
        assert tuple(imgcore.bounding_box(m)) == (3, 3, 5, 5)

    def test_empty_raises(self):
        with pytest.raises(NoInk):
            imgcore.bounding_box(np.zeros((4, 4), np.uint8))

    def test_seed3_matches_naive_scan(self):
        m = (np.random.default_rng(3).random((16, 16)) < 0.05).astype(np.uint8)
        assert tuple(imgcore.bounding_box(m)) == oracles.bbox_naive(m)

    @given(masks())
    def test_tight(self, m):
        if not m.any():
            return
        r0, r1, c0, c1 = imgcore.bounding_box(m)
        assert m[r0:r1 + 1, c0:c1 + 1].sum() == m.sum()
        assert m[r0].any() and m[r1].any() and m[:, c0].any() and m[:, c1].any()


class TestCrop:
    def test_full_box_identity(self):
        img = np.arange(16, dtype=np.uint8).reshape(4, 4)
        np.testing.assert_array_equal(imgcore.crop(img, imgcore.BoundingBox(0, 3, 0, 3)), img)

    def test_single_pixel(self):
        img = np.arange(25, dtype=np.uint8).reshape(5, 5)
        np.testing.assert_array_equal(imgcore.crop(img, imgcore.BoundingBox(2, 2, 2, 2)), [[12]])

    def test_slab(self):
        img = np.arange(16, dtype=np.uint8).reshape(4, 4)
        out = imgcore.crop(img, imgcore.BoundingBox(1, 2, 0, 3))
        assert out.shape == (2, 4)
        for i in range(2):
            for j in range(4):
                assert out[i, j] == img[1 + i, j]

    def test_out_of_bounds(self):
        with pytest.raises(OutOfBounds):
            imgcore.crop(np.zeros((4, 4), np.uint8), imgcore.BoundingBox(0, 4, 0, 1))


class TestResize:
    def test_nearest_identity_512(self):
        m = (np.random.default_rng(0).random((512, 512)) < 0.3).astype(np.uint8)
        np.testing.assert_array_equal(imgcore.resize(m, 512, 512, binary=True), m)

    @pytest.mark.parametrize("shape", [(3, 7), (1, 1), (20, 5)])
    def test_constant_stays_constant(self, shape):
        img = np.full((5, 9), 77, np.uint8)
        assert (imgcore.resize(img, *shape) == 77).all()

    def test_bilinear_2x2_to_4x4(self):
        img = np.array([[0, 255], [255, 0]], dtype=np.uint8)
        expected = np.clip(np.rint(oracles.bilinear_naive(img.astype(float), 4, 4)), 0, 255)
        np.testing.assert_array_equal(imgcore.resize(img, 4, 4), expected)
        # corners are clamped to the source pixels
        assert imgcore.resize(img, 4, 4)[0, 0] == 0 and imgcore.resize(img, 4, 4)[0, 3] == 255

    def test_bilinear_same_size_identity(self):
        img = np.random.default_rng(1).integers(0, 256, (13, 17), dtype=np.uint8)
        np.testing.assert_array_equal(imgcore.resize(img, 13, 17), img)

    @given(masks(), st.integers(1, 20), st.integers(1, 20))
    def test_binary_stays_binary(self, m, h, w):
        out = imgcore.resize(m, h, w, binary=True)
        assert out.shape == (h, w)
        assert set(np.unique(out)) <= {0, 1}


class TestMorphology:
    def test_open_removes_speck(self):
        m = np.zeros((7, 7), np.uint8)
        m[3, 3] = 1
        assert not imgcore.morph_open(m).any()

    def test_open_empty(self):
        assert not imgcore.morph_open(np.zeros((5, 5), np.uint8)).any()

    def test_open_block(self):
        m = np.zeros((8, 8), np.uint8)
        m[2:6, 2:6] = 1
        expected = oracles.dilate_naive(oracles.erode_naive(m))
        np.testing.assert_array_equal(imgcore.morph_open(m), expected)
        # a 4x4 block under a cross loses exactly its four corners
        corners = m.copy()
        corners[[2, 2, 5, 5], [2, 5, 2, 5]] = 0
        np.testing.assert_array_equal(imgcore.morph_open(m), corners)

    @settings(max_examples=60)
    @given(masks(12))
    def test_open_matches_scipy_and_is_anti_extensive(self, m):
        out = imgcore.morph_open(m)
        ref = ndimage.binary_opening(m, structure=ndimage.generate_binary_structure(2, 1))
        np.testing.assert_array_equal(out, ref.astype(np.uint8))
        assert (out <= m).all()

    def test_fill_single_hole(self):
        m = np.ones((5, 5), np.uint8)
        m[2, 2] = 0
        assert imgcore.remove_small_holes(m, 4).all()

    def test_fill_empty(self):
        assert not imgcore.remove_small_holes(np.zeros((5, 5), np.uint8), 64).any()

    def test_fill_two_holes_by_area(self):
        m = np.ones((10, 16), np.uint8)
        m[2, 2:4] = 0  # area 2
        m[4:7, 8:11] = 0  # area 9
        out = imgcore.remove_small_holes(m, 4)
        np.testing.assert_array_equal(out, oracles.fill_holes_naive(m, 4))
        assert out[2, 2:4].all() and not out[4:7, 8:11].any()

    @settings(max_examples=60)
    @given(masks(12), st.integers(0, 10))
    def test_fill_matches_flood_fill_and_is_extensive(self, m, area):
        out = imgcore.remove_small_holes(m, area)
        np.testing.assert_array_equal(out, oracles.fill_holes_naive(m, area))
        assert (out >= m).all()


class TestSkeleton:
    def test_empty(self):
        assert not imgcore.skeletonize(np.zeros((6, 6), np.uint8)).any()

    def test_single_pixel(self):
        m = np.zeros((5, 5), np.uint8)
        m[2, 2] = 1
        np.testing.assert_array_equal(imgcore.skeletonize(m), m)

    def test_thick_bar_to_line(self):
        m = np.zeros((9, 20), np.uint8)
        m[3:6, 2:18] = 1
        out = imgcore.skeletonize(m)
        np.testing.assert_array_equal(out, oracles.zhang_suen_naive(m))
        assert out.sum(axis=0).max() == 1  # one pixel wide
        assert out.sum() >= 10

    @settings(max_examples=40, deadline=None)
    @given(masks(10))
    def test_matches_reference_subset_and_idempotent(self, m):
        out = imgcore.skeletonize(m)
        np.testing.assert_array_equal(out, oracles.zhang_suen_naive(m))
        assert (out <= m).all()
        np.testing.assert_array_equal(imgcore.skeletonize(out), out)


class TestPreprocess:
    def test_already_cropped(self):
        rng = np.random.default_rng(0)
        img = np.where(rng.random((512, 512)) < 0.2, 30, 220).astype(np.uint8)
        img[0, 0] = img[-1, -1] = 30  # ink touches every border
        gray, mask = imgcore.preprocess_signature(img)
        np.testing.assert_array_equal(gray, img)
        np.testing.assert_array_equal(mask, (img == 30).astype(np.uint8))

    def test_top_left_ink_spans_width(self):
        img = np.full((600, 800), 240, np.uint8)
        img[40:60, 30:300] = 20
        img[100:130, 50:90] = 20
        gray, mask = imgcore.preprocess_signature(img)
        assert gray.shape == mask.shape == (512, 512)
        assert mask.any(axis=0).all()
        assert mask[:, 0].any() and mask[:, -1].any() and mask[0].any()

    def test_blank_page(self):
        img = np.full((64, 64), 250, np.uint8)
        with pytest.raises(NoInk):
            imgcore.preprocess_signature(img)


def test_png_roundtrip(tmp_path):
    m = (np.random.default_rng(2).random((20, 30)) < 0.4).astype(np.uint8)
    imgcore.write_png(tmp_path / "m.png", m, binary=True)
    np.testing.assert_array_equal(imgcore.read_mask(tmp_path / "m.png"), m)
    g = np.random.default_rng(3).integers(0, 256, (20, 30), dtype=np.uint8)
    imgcore.write_png(tmp_path / "g.png", g)
    np.testing.assert_array_equal(imgcore.read_gray(tmp_path / "g.png"), g)


def test_pgm_read(tmp_path):
    g = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    header = b"P5\n4 3\n255\n"
    (tmp_path / "x.pgm").write_bytes(header + g.tobytes())
    np.testing.assert_array_equal(imgcore.read_gray(tmp_path / "x.pgm"), g)
