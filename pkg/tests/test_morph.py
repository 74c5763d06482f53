import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eyemetrics.imagecore import BinaryImage, invert
from eyemetrics.morph import (PUPIL_DISK, MorphParams, StructuringElement, closing, dilate,
                              erode, opening, pupil_filter)
from eyemetrics.synth import disk_mask

DISK = StructuringElement.disk()
bin_arrays = arrays(np.bool_, st.tuples(st.integers(1, 20), st.integers(1, 20)))


def at(px, y, x):
    h, w = px.shape
    return bool(px[y, x]) if 0 <= y < h and 0 <= x < w else False


def brute_erode(px, mask):
    """min over the neighbourhood, straight from the definition."""
    c = mask.shape[0] // 2
    out = np.zeros_like(px)
    for y in range(px.shape[0]):
        for x in range(px.shape[1]):
            out[y, x] = min(at(px, y + i - c, x + j - c)
                            for i in range(mask.shape[0]) for j in range(mask.shape[1]) if mask[i, j])
    return out


def brute_dilate(px, mask):
    c = mask.shape[0] // 2
    out = np.zeros_like(px)
    for y in range(px.shape[0]):
        for x in range(px.shape[1]):
            out[y, x] = max(at(px, y - (i - c), x - (j - c))
                            for i in range(mask.shape[0]) for j in range(mask.shape[1]) if mask[i, j])
    return out


def test_default_disk_matches_template():
    rows = ["0001000", "0011100", "0111110", "1111111", "0111110", "0011100", "0001000"]
    expect = np.array([[c == "1" for c in r] for r in rows])
    assert np.array_equal(DISK.mask, expect)
    assert np.array_equal(np.array(PUPIL_DISK, bool), expect)
    assert DISK.size == 7 and DISK.origin == (3, 3)
    assert np.array_equal(np.rot90(DISK.mask), DISK.mask)


def test_disk_is_l1_ball_of_radius_three():
    yy, xx = np.mgrid[-3:4, -3:4]
    assert np.array_equal(DISK.mask, np.abs(yy) + np.abs(xx) <= 3)


def test_structuring_element_validation():
    with pytest.raises(ValueError):
        StructuringElement(np.ones((2, 2)))
    with pytest.raises(ValueError):
        StructuringElement(np.ones((3, 5)))
    with pytest.raises(ValueError):
        StructuringElement(np.zeros((3, 3)))


def test_structuring_element_from_text(tmp_path):
    text = "# cross\n010\n111\n010\n"
    se = StructuringElement.from_text(text)
    assert se.mask.sum() == 5
    assert np.array_equal(StructuringElement.from_text("0 1 0\n1,1,1\n0 1 0").mask, se.mask)
    p = tmp_path / "se.txt"
    p.write_text("\n".join("".join(str(v) for v in r) for r in PUPIL_DISK))
    assert np.array_equal(StructuringElement.load(p).mask, DISK.mask)
    with pytest.raises(ValueError):
        StructuringElement.from_text("012\n111\n010")
    with pytest.raises(ValueError):
        StructuringElement.from_text("01\n111\n010")


def test_morph_params_validation():
    assert MorphParams() == MorphParams(2, 3)
    with pytest.raises(ValueError):
        MorphParams(3, 2)
    with pytest.raises(ValueError):
        MorphParams(-1, 2)


def test_erode_all_true_keeps_interior():
    out = erode(BinaryImage(np.ones((20, 20), bool))).pixels
    assert out[3:-3, 3:-3].all()
    assert not out[:3].any() and not out[-3:].any() and not out[:, :3].any() and not out[:, -3:].any()


def test_erode_single_pixel_vanishes():
    px = np.zeros((9, 9), bool)
    px[4, 4] = True
    assert not erode(BinaryImage(px)).pixels.any()


def test_dilate_examples():
    assert not dilate(BinaryImage(np.zeros((9, 9), bool))).pixels.any()
    px = np.zeros((11, 11), bool)
    px[5, 5] = True
    out = dilate(BinaryImage(px)).pixels
    assert np.array_equal(out[2:9, 2:9], DISK.mask) and out.sum() == DISK.mask.sum()


def test_asymmetric_se_dilation_reflects():
    mask = np.zeros((3, 3), bool)
    mask[1, 1] = mask[1, 2] = True  # origin and its right neighbour
    se = StructuringElement(mask)
    px = np.zeros((5, 5), bool)
    px[2, 2] = True
    out = dilate(BinaryImage(px), se).pixels
    assert out[2, 2] and out[2, 3] and out.sum() == 2
    assert np.array_equal(out, brute_dilate(px, mask))


def test_brute_force_oracle_on_random_images():
    rng = np.random.default_rng(7)
    for _ in range(10):
        px = rng.random((32, 32)) < 0.6
        assert np.array_equal(erode(BinaryImage(px)).pixels, brute_erode(px, DISK.mask))
        assert np.array_equal(dilate(BinaryImage(px)).pixels, brute_dilate(px, DISK.mask))


@settings(max_examples=40)
@given(bin_arrays)
def test_duality_on_interior(px):
    f = BinaryImage(px)
    lhs = invert(dilate(f)).pixels[3:-3, 3:-3]
    rhs = erode(invert(f)).pixels[3:-3, 3:-3]
    assert np.array_equal(lhs, rhs)


@settings(max_examples=40)
@given(bin_arrays)
def test_erosion_anti_extensive_dilation_extensive(px):
    f = BinaryImage(px)
    e, d = erode(f).pixels, dilate(f).pixels
    assert not (e & ~px).any()
    assert not (px & ~d).any()


@settings(max_examples=40)
@given(bin_arrays, st.data())
def test_monotonicity(px, data):
    extra = data.draw(arrays(np.bool_, px.shape))
    f, g = BinaryImage(px), BinaryImage(px | extra)
    assert not (erode(f).pixels & ~erode(g).pixels).any()
    assert not (dilate(f).pixels & ~dilate(g).pixels).any()


@settings(max_examples=40)
@given(bin_arrays)
def test_opening_idempotent(px):
    once = opening(BinaryImage(px))
    assert opening(once) == once


@settings(max_examples=20)
@given(bin_arrays)
def test_closing_extensive_away_from_border(px):
    # Out-of-bounds background makes closing lose border pixels; check the interior.
    c = closing(BinaryImage(px)).pixels
    assert not (px & ~c)[6:-6, 6:-6].any()


def test_pupil_filter_zero_iterations_is_inversion():
    px = np.random.default_rng(0).random((16, 16)) < 0.5
    f = BinaryImage(px)
    assert pupil_filter(f, DISK, MorphParams(0, 0)) == invert(f)


def test_pupil_filter_is_the_composition():
    px = np.random.default_rng(1).random((40, 40)) < 0.3
    f = BinaryImage(px)
    g = invert(f)
    for _ in range(2):
        g = erode(g, DISK)
    for _ in range(3):
        g = dilate(g, DISK)
    g = erode(g, DISK)
    assert pupil_filter(f, DISK, MorphParams(2, 3)) == g


def test_pupil_filter_removes_speckle_and_keeps_disk():
    rng = np.random.default_rng(5)
    disk = disk_mask(80, 80, 40, 40, 12)
    picture = ~disk  # pupil drawn black
    spots = 0
    while spots < 30:
        y, x = rng.integers(0, 80, 2)
        if (x - 40) ** 2 + (y - 40) ** 2 > 20 ** 2 and picture[y, x]:
            picture[y, x] = False
            spots += 1
    out = pupil_filter(BinaryImage(picture), DISK, MorphParams(2, 3)).pixels
    assert not (out & ~disk_mask(80, 80, 40, 40, 16)).any()  # no speckle survives
    assert abs(int(out.sum()) - int(disk.sum())) <= 0.1 * disk.sum()
