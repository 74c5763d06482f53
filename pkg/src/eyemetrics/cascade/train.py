"""Discrete AdaBoost over decision stumps, and stage-by-stage cascade training."""
from __future__ import annotations

import logging
import math
from typing import Callable, Sequence

import numpy as np

from ..imagecore import GrayImage
from .features import HaarFeature, feature_matrix
from .model import Cascade, StrongClassifier, WeakClassifier

log = logging.getLogger(__name__)

MIN_SAMPLES = 10
ALPHA_RANGE = (1e-3, 10.0)
STAGE_DETECTION = 0.99


class TrainingError(ValueError):
    pass


def normalize_sample(img: GrayImage, size=(24, 24)) -> GrayImage:
    """Nearest-neighbour resample to ``size`` = (width, height)."""
    if img.size == 0:
        raise ValueError("empty sample")
    w, h = size
    if (img.width, img.height) == (w, h):
        return GrayImage(img.pixels)
    ys = np.minimum(((np.arange(h) + 0.5) * img.height / h).astype(np.int64), img.height - 1)
    xs = np.minimum(((np.arange(w) + 0.5) * img.width / w).astype(np.int64), img.width - 1)
    return GrayImage(img.pixels[np.ix_(ys, xs)])


def sample_stats(img: GrayImage) -> tuple[float, float]:
    """Mean and standard deviation, the variance-normalization metadata."""
    px = img.pixels.astype(np.float64)
    return float(px.mean()), float(px.std())


def _best_stump(values: np.ndarray, order: np.ndarray, sorted_vals: np.ndarray,
                y: np.ndarray, w: np.ndarray):
    """Lowest weighted-error (feature, split, polarity) over the whole bank."""
    n_feat, n = values.shape
    ws = w[order]
    pos = np.where(y[order] > 0, ws, 0.0)
    neg = ws - pos
    cum_p = np.zeros((n_feat, n + 1))
    cum_n = np.zeros((n_feat, n + 1))
    np.cumsum(pos, axis=1, out=cum_p[:, 1:])
    np.cumsum(neg, axis=1, out=cum_n[:, 1:])
    wp, wn = cum_p[:, -1:], cum_n[:, -1:]
    # Split k puts sorted samples [0, k) below the threshold.
    err_up = cum_p + (wn - cum_n)      # polarity +1: +1 at or above t
    err_down = cum_n + (wp - cum_p)    # polarity -1: +1 at or below t
    valid = np.ones((n_feat, n + 1), dtype=bool)
    valid[:, 1:n] = sorted_vals[:, :-1] < sorted_vals[:, 1:]
    err_up[~valid] = np.inf
    err_down[~valid] = np.inf
    both = np.stack([err_up, err_down])
    p, fi, k = np.unravel_index(int(np.argmin(both)), both.shape)
    sv = sorted_vals[fi]
    if k == 0:
        t = sv[0] - 1.0
    elif k == n:
        t = sv[-1] + 1.0
    else:
        t = 0.5 * (sv[k - 1] + sv[k])
    return int(fi), float(t), 1 if p == 0 else -1


def _stump_output(v: np.ndarray, t: float, polarity: int) -> np.ndarray:
    return np.where(polarity * v >= polarity * t, 1.0, -1.0)


def _largest_admitting(pos_scores: np.ndarray, all_scores: np.ndarray, rate: float) -> float:
    """Largest threshold with ``score > threshold`` for ``rate`` of positives.

    Placed midway to the next lower score seen in training, so every sample
    falls on the same side as it would at the supremum.
    """
    s = np.sort(pos_scores)
    k = int(math.floor((1.0 - rate) * len(s) + 1e-9))
    cut = s[k]
    lower = all_scores[all_scores < cut]
    if lower.size:
        return 0.5 * (cut + float(lower.max()))
    return cut - 1.0


def train_stage(pos: Sequence[GrayImage], neg: Sequence[GrayImage], bank: Sequence[HaarFeature],
                rounds: int, detection_rate: float = STAGE_DETECTION,
                values: np.ndarray | None = None, trace: list | None = None) -> StrongClassifier:
    """Boost ``rounds`` stumps from ``bank`` into one strong classifier.

    Each round picks the stump with the lowest weighted error ``eps``, gives
    it weight ``ln((1 - eps) / eps)`` clamped to [1e-3, 10], and multiplies
    the weights of the samples it got wrong by ``exp(weight)``. The stage
    threshold starts at the plain sign vote (0) and is lowered, only if
    needed, to the largest value that still passes ``detection_rate`` of
    the positives. ``values`` may carry a precomputed ``feature_matrix``;
    ``trace``, when given, receives one dict per round.
    """
    if len(pos) < MIN_SAMPLES or len(neg) < MIN_SAMPLES:
        raise TrainingError(f"need >= {MIN_SAMPLES} positive and negative samples, "
                            f"got {len(pos)} and {len(neg)}")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    bank = list(bank)
    if values is None:
        values = feature_matrix(list(pos) + list(neg), bank)
    n_pos, n = len(pos), len(pos) + len(neg)
    y = np.concatenate([np.ones(n_pos), -np.ones(n - n_pos)])
    w = np.where(y > 0, 0.5 / n_pos, 0.5 / (n - n_pos))
    order = np.argsort(values, axis=1, kind="stable")
    sorted_vals = np.take_along_axis(values, order, axis=1)

    members, alphas = [], []
    score = np.zeros(n)
    for rnd in range(rounds):
        fi, t, pol = _best_stump(values, order, sorted_vals, y, w)
        h = _stump_output(values[fi], t, pol)
        miss = h != y
        eps = float(w[miss].sum())
        if eps >= 0.5:
            if not members:
                raise TrainingError("bank cannot separate")
            break
        alpha = ALPHA_RANGE[1] if eps <= 0 else math.log((1.0 - eps) / eps)
        alpha = min(max(alpha, ALPHA_RANGE[0]), ALPHA_RANGE[1])
        members.append(WeakClassifier(bank[fi], t, pol))
        alphas.append(alpha)
        score = score + alpha * h
        log.debug("round %d: feature %d eps=%.4g alpha=%.4g", rnd, fi, eps, alpha)
        if eps <= 0:
            if trace is not None:
                trace.append({"feature": fi, "eps": eps, "alpha": alpha, "weight_sum": float(w.sum())})
            break
        w = w * np.exp(alpha * miss)
        w = w / w.sum()
        if trace is not None:
            trace.append({"feature": fi, "eps": eps, "alpha": alpha, "weight_sum": float(w.sum())})

    thr = min(0.0, _largest_admitting(score[:n_pos], score, detection_rate))
    return StrongClassifier(members, alphas, thr)


def stage_scores(stage: StrongClassifier, samples) -> np.ndarray:
    """Weighted votes of every sample, in member order."""
    vals = feature_matrix(samples, [m.feature for m in stage.members])
    total = np.zeros(len(samples))
    for row, m, w in zip(vals, stage.members, stage.weights):
        total = total + w * _stump_output(row, m.t, m.polarity)
    return total


def staged_errors(stage: StrongClassifier, pos, neg) -> list[float]:
    """Training error of the sign vote after each boosting round."""
    samples = list(pos) + list(neg)
    y = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    vals = feature_matrix(samples, [m.feature for m in stage.members])
    total = np.zeros(len(samples))
    errs = []
    for row, m, w in zip(vals, stage.members, stage.weights):
        total = total + w * _stump_output(row, m.t, m.polarity)
        errs.append(float(np.mean(np.where(total > 0, 1.0, -1.0) != y)))
    return errs


def cascade_accepts(c: Cascade, samples) -> np.ndarray:
    """Boolean mask of base-size samples that pass every stage."""
    alive = np.ones(len(samples), dtype=bool)
    for st in c.stages:
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        scores = stage_scores(st, [samples[i] for i in idx])
        alive[idx[scores <= st.stage_threshold]] = False
    return alive


def train_cascade(pos, neg, bank, rounds: Sequence[int], window=(24, 24),
                  detection_rate: float = STAGE_DETECTION,
                  refill: Callable[[Cascade, int], list] | None = None) -> Cascade:
    """Train one stage per entry of ``rounds``.

    Later stages only see the negatives every earlier stage let through.
    ``refill(cascade, n)``, when given, is asked for up to ``n`` fresh
    negatives the current cascade still accepts, topping the pool back up
    to its starting size. Training stops once fewer than ten negatives
    remain.
    """
    pos, neg = list(pos), list(neg)
    target = len(neg)
    stages = []
    remaining = neg
    for r in rounds:
        if len(remaining) < MIN_SAMPLES:
            break
        stage = train_stage(pos, remaining, bank, r, detection_rate)
        stages.append(stage)
        current = Cascade(stages, window)
        keep = cascade_accepts(Cascade([stage], window), remaining)
        remaining = [s for s, k in zip(remaining, keep) if k]
        if refill is not None and len(remaining) < target:
            fresh = list(refill(current, target - len(remaining)))
            if fresh:
                ok = cascade_accepts(current, fresh)
                remaining += [s for s, k in zip(fresh, ok) if k]
        log.info("stage %d: %d members, %d negatives left", len(stages), len(stage.members),
                 len(remaining))
    if not stages:
        raise TrainingError("no stage could be trained")
    return Cascade(stages, window)
