"""Face and eye cascades trained on the synthetic generator, shipped as data.

They only know the schematic faces drawn by :mod:`eyemetrics.synth`; real
photographs need cascades trained with ``eyemetrics train``.
"""
from __future__ import annotations

import json
from importlib import resources

import numpy as np

from . import synth
from .cascade import Cascade, default_bank, train_cascade
from .imagecore import GrayImage

KINDS = ("face", "eye")
STAGE_ROUNDS = (4, 8, 16, 24)
RECIPE = {"n_pos": 400, "n_neg": 1200, "sample_seed": 11, "mining_seed": 5}


def builtin_name(kind: str) -> str:
    return f"builtin:{kind}-synthetic"


def build_synthetic_cascade(kind: str) -> Cascade:
    """Retrain a shipped cascade from scratch (about 15 s each)."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    pos, neg = synth.sample_set(kind, RECIPE["n_pos"], RECIPE["n_neg"], seed=RECIPE["sample_seed"])
    pos = [GrayImage(p) for p in pos]
    neg = [GrayImage(p) for p in neg]
    rng = np.random.default_rng(RECIPE["mining_seed"])

    def refill(c, n):
        return [GrayImage(p) for p in synth.mine_negatives(kind, c, n, seed=rng)]

    c = train_cascade(pos, neg, default_bank(), list(STAGE_ROUNDS), refill=refill)
    meta = {"name": builtin_name(kind), "kind": kind, "rounds": list(STAGE_ROUNDS), **RECIPE}
    return Cascade(c.stages, c.window, meta)


def dumps(c: Cascade) -> str:
    return json.dumps(c.to_dict(), indent=1, sort_keys=True) + "\n"


def load_builtin(kind: str) -> Cascade:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    text = resources.files("eyemetrics").joinpath("data", f"{kind}_synthetic.json").read_text()
    return Cascade.from_dict(json.loads(text))
