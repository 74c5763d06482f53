import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eyemetrics.imagecore import GrayImage, compute_histogram
from eyemetrics.synth import synth_eye
from eyemetrics.threshold import (KERNEL_MASS, ThresholdError, binarize, build_kernel,
                                  find_peaks, gaussian_delta, select_threshold, smooth)

bins_strategy = arrays(np.float64, 256, elements=st.floats(0, 1e4))


def two_gaussians(m1=40, m2=160, s=12.0, mass1=1e5, mass2=1e5):
    g = np.arange(256)
    a = np.exp(-0.5 * ((g - m1) / s) ** 2)
    b = np.exp(-0.5 * ((g - m2) / s) ** 2)
    return mass1 * a / a.sum() + mass2 * b / b.sum()


def naive_smooth(bins, taps):
    """Direct sum with half-sample reflection: index -1 -> 0, 256 -> 255."""
    half = (len(taps) - 1) // 2

    def reflect(i):
        while i < 0 or i > 255:
            i = -1 - i if i < 0 else 511 - i
        return i

    out = np.zeros(256)
    for g in range(256):
        acc = 0.0
        for j, t in enumerate(range(-half, half + 1)):
            acc += bins[reflect(g - t)] * taps[j]
        out[g] = acc
    return out


@pytest.mark.parametrize("bt", [0.01, 0.05, 0.2, 1.0])
def test_kernel_symmetric_unit_mass(bt):
    k = build_kernel(bt)
    assert np.array_equal(k.taps, k.taps[::-1])
    assert abs(k.taps.sum() - 1.0) <= 1e-9
    if k.half_width:
        assert k.taps[k.half_width + 1] == k.taps[k.half_width - 1]


@pytest.mark.parametrize("bt", [0.02, 0.05, 0.1, 0.3])
def test_delta_formula(bt):
    assert gaussian_delta(bt) == math.sqrt(math.log(2)) / (2 * math.pi * bt)
    assert build_kernel(bt).delta == gaussian_delta(bt)


def test_default_delta_is_mild():
    assert abs(build_kernel(0.05).delta - 2.65) < 0.01


def test_kernel_taps_match_high_precision_formula():
    mpmath.mp.dps = 40
    bt = mpmath.mpf("0.05")
    delta = mpmath.sqrt(mpmath.log(2)) / (2 * mpmath.pi * bt)
    k = build_kernel(0.05)
    for t, tap in zip(k.offsets, k.raw_taps):
        ref = mpmath.exp(-mpmath.mpf(int(t)) ** 2 / (2 * delta ** 2)) / (mpmath.sqrt(2 * mpmath.pi) * delta)
        assert abs(tap - float(ref)) <= 1e-15 * float(ref) + 1e-300


@pytest.mark.parametrize("bt", [0.02, 0.05, 0.2])
def test_kernel_truncation_keeps_mass(bt):
    k = build_kernel(bt)
    d = k.delta
    full = sum(math.exp(-t * t / (2 * d * d)) for t in range(-2000, 2001))
    kept = sum(math.exp(-t * t / (2 * d * d)) for t in k.offsets)
    assert kept >= KERNEL_MASS * full
    # and one tap less would not
    inner = sum(math.exp(-t * t / (2 * d * d)) for t in k.offsets[1:-1])
    assert k.half_width == 0 or inner < KERNEL_MASS * full


def test_kernel_rejects_nonpositive_bt():
    for bt in (0, -1):
        with pytest.raises(ValueError):
            build_kernel(bt)


def test_smooth_delta_histogram_reproduces_kernel():
    bins = np.zeros(256)
    bins[128] = 1.0
    k = build_kernel(0.05)
    v = smooth(bins, k).values
    half = k.half_width
    assert np.allclose(v[128 - half:128 + half + 1], k.taps, rtol=0, atol=1e-15)
    assert v[:128 - half].sum() == 0 and v[129 + half:].sum() == 0


def test_smooth_uniform_stays_uniform():
    v = smooth(np.full(256, 7.0), build_kernel(0.05)).values
    assert np.allclose(v, 7.0, rtol=1e-3)


def test_smooth_matches_naive_convolution():
    bins = two_gaussians() + np.random.default_rng(0).integers(0, 50, 256)
    k = build_kernel(0.05)
    got = smooth(bins, k).values
    ref = naive_smooth(bins, k.taps)
    assert np.allclose(got, ref, rtol=1e-12, atol=1e-9)


@given(bins_strategy)
def test_smooth_preserves_mass(bins):
    sh = smooth(bins, build_kernel(0.05))
    assert abs(sh.values.sum() - bins.sum()) <= 1e-3 * max(bins.sum(), 1e-12)
    assert (sh.values >= 0).all()


@settings(max_examples=50)
@given(bins_strategy, bins_strategy, st.floats(0, 5), st.floats(0, 5))
def test_smooth_is_linear(h1, h2, a, b):
    k = build_kernel(0.05)
    left = smooth(a * h1 + b * h2, k).values
    right = a * smooth(h1, k).values + b * smooth(h2, k).values
    scale = max(1.0, float(np.abs(a * h1 + b * h2).max()))
    assert np.max(np.abs(left - right)) <= 1e-9 * scale


def test_valley_between_two_gaussians():
    sh = smooth(two_gaussians(), build_kernel(0.05))
    tr = select_threshold(sh)
    assert tr.method == "valley"
    assert tr.peak_low <= tr.threshold <= tr.peak_high
    lo, hi = 40, 160
    seg = sh.values[lo + 1:hi]
    assert sh.values[tr.threshold] == pytest.approx(seg.min(), rel=1e-12)
    assert abs(tr.threshold - 100) <= 1


def test_single_mode_falls_back_to_percentile():
    g = np.arange(256)
    bins = 1e5 * np.exp(-0.5 * ((g - 120) / 15.0) ** 2)
    sh = smooth(bins, build_kernel(0.05))
    tr = select_threshold(sh)
    assert tr.method == "fallback"
    cdf = np.cumsum(sh.values)
    assert tr.threshold == int(np.searchsorted(cdf, 0.15 * cdf[-1]))


def test_constant_histogram_raises():
    img = GrayImage(np.full((10, 10), 77, dtype=np.uint8))
    with pytest.raises(ThresholdError):
        select_threshold(smooth(compute_histogram(img), build_kernel(0.05)))


@settings(max_examples=60)
@given(st.floats(1e-3, 1e3), st.integers(20, 90), st.integers(110, 230), st.floats(0.2, 5))
def test_threshold_invariant_under_mass_scaling(c, m1, m2, ratio):
    bins = two_gaussians(m1, m2, mass1=1e4, mass2=1e4 * ratio)
    k = build_kernel(0.05)
    assert select_threshold(smooth(bins, k)) == select_threshold(smooth(c * bins, k))


def test_find_peaks_flat_top_reports_middle():
    v = np.array([0, 1, 3, 3, 3, 3, 1, 0, 2, 0], dtype=float)
    assert find_peaks(v) == [3, 8]


def test_binarize_extremes():
    img = GrayImage(np.random.default_rng(0).integers(1, 256, (8, 8), dtype=np.uint8))
    assert binarize(img, 255).count == 64
    assert binarize(img, 0).count == 0
    with pytest.raises(ValueError):
        binarize(img, 256)


@given(arrays(np.uint8, (6, 7)), st.integers(0, 254))
def test_binarize_monotone(px, t):
    img = GrayImage(px)
    lo, hi = binarize(img, t).pixels, binarize(img, t + 1).pixels
    assert not (lo & ~hi).any()


def test_selected_threshold_recovers_disk():
    img, truth = synth_eye(80, 70, 33, 29, 12, noise=5, seed=3)
    sh = smooth(compute_histogram(img), build_kernel(0.05))
    mask = binarize(img, select_threshold(sh).threshold).pixels
    assert (mask & truth).sum() >= 0.99 * truth.sum()
    iou = (mask & truth).sum() / (mask | truth).sum()
    assert iou >= 0.95
