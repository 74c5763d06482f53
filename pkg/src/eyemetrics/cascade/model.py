"""Weak/strong classifiers, the cascade, and its JSON file format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..imagecore import IntegralImage, Rect
from .features import HaarFeature, eval_feature, window_std

FORMAT_NAME = "eyemetrics-cascade"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class WeakClassifier:
    feature: HaarFeature
    t: float
    polarity: int = 1

    def __post_init__(self):
        if self.polarity not in (1, -1):
            raise ValueError("polarity must be +1 or -1")


def eval_weak(c: WeakClassifier, v: float) -> int:
    """+1 when ``polarity * v >= polarity * t`` (boundary votes +1), else -1."""
    return 1 if c.polarity * v >= c.polarity * c.t else -1


@dataclass(frozen=True)
class StrongClassifier:
    members: tuple
    weights: tuple
    stage_threshold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.members) != len(self.weights) or not self.members:
            raise ValueError("need one weight per weak classifier and at least one member")
        if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
            raise ValueError("weights must be non-negative with a positive sum")

    def prefix(self, k: int, stage_threshold: float = 0.0) -> "StrongClassifier":
        return StrongClassifier(self.members[:k], self.weights[:k], stage_threshold)


def vote(s: StrongClassifier, outputs) -> float:
    total = 0.0
    for w, f in zip(s.weights, outputs):
        total += w * f
    return total


def strong_score(s: StrongClassifier, ii: IntegralImage, window: Rect) -> float:
    std = window_std(ii, window)
    return vote(s, (eval_weak(m, eval_feature(ii, m.feature, window, std)) for m in s.members))


def eval_strong(s: StrongClassifier, ii: IntegralImage, window: Rect) -> bool:
    """Match iff the weighted vote exceeds the stage threshold; a tie does not match."""
    return strong_score(s, ii, window) > s.stage_threshold


@dataclass(frozen=True)
class Detection:
    rect: Rect
    scale: float
    stages_passed: int
    accepted: bool = True
    hits: int = 1

    def to_dict(self):
        return {"rect": list(self.rect.as_tuple()), "scale": self.scale,
                "stages_passed": self.stages_passed, "hits": self.hits}


@dataclass(frozen=True)
class Cascade:
    stages: tuple
    window: tuple = (24, 24)
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "window", tuple(self.window))
        if not self.stages:
            raise ValueError("a cascade needs at least one stage")
        for st in self.stages:
            for m in st.members:
                if tuple(m.feature.base) != self.window:
                    raise ValueError("feature base window differs from cascade window")

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "window": list(self.window),
            "meta": self.meta,
            "stages": [
                {"threshold": st.stage_threshold,
                 "weak": [{"rects": m.feature.to_list(), "t": m.t, "polarity": m.polarity,
                           "w": w, "kind": m.feature.kind}
                          for m, w in zip(st.members, st.weights)]}
                for st in self.stages
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Cascade":
        if doc.get("format") != FORMAT_NAME:
            raise ValueError(f"not a {FORMAT_NAME} document")
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported cascade version {doc.get('version')}")
        window = tuple(doc["window"])
        stages = []
        for st in doc["stages"]:
            members, weights = [], []
            for wk in st["weak"]:
                feat = HaarFeature(tuple(tuple(r) for r in wk["rects"]), window, wk.get("kind", ""))
                members.append(WeakClassifier(feat, float(wk["t"]), int(wk["polarity"])))
                weights.append(float(wk["w"]))
            stages.append(StrongClassifier(members, weights, float(st["threshold"])))
        return cls(stages, window, doc.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "Cascade":
        return cls.from_dict(json.loads(Path(path).read_text()))


def eval_cascade(c: Cascade, ii: IntegralImage, window: Rect) -> Detection:
    """Run stages in order and stop at the first one that does not match."""
    passed = 0
    for st in c.stages:
        if not eval_strong(st, ii, window):
            break
        passed += 1
    return Detection(rect=window, scale=window.w / float(c.window[0]), stages_passed=passed,
                     accepted=passed == len(c.stages))
