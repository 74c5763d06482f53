"""Regenerate src/eyemetrics/data/*_synthetic.json."""
import logging
import time
from pathlib import Path

from eyemetrics.builtin import KINDS, build_synthetic_cascade, dumps

logging.basicConfig(level=logging.INFO, format="%(message)s")
out = Path(__file__).resolve().parent.parent / "src" / "eyemetrics" / "data"

for kind in KINDS:
    t = time.perf_counter()
    c = build_synthetic_cascade(kind)
    (out / f"{kind}_synthetic.json").write_text(dumps(c))
    print(f"{kind}: {len(c.stages)} stages, {[len(s.members) for s in c.stages]} members, "
          f"{time.perf_counter() - t:.1f} s")
