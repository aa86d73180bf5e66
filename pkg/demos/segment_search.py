"""Search over straight roads of bounded length across the unit square.

Runs the grid described in data/segment_search.cfg, refines the best chord
by local search, and re-checks the top candidates on a finer mesh.
"""

import time
from pathlib import Path

from roadfield import read_config, search
from roadfield.config import family_spec

DATA = Path(__file__).resolve().parent / "data"

cfg = read_config(DATA / "segment_search.cfg")
spec = family_spec(cfg)
start = time.perf_counter()
res = search(spec, cfg.load_domain(), cfg.params, 1 / 16, local_steps=10, recheck_top=2)
print(f"{len(res.ranked)} feasible roads in {time.perf_counter() - start:.1f} s")
for c, rep in res.ranked[:5]:
    print(f"  {c.id:<28} length={c.length:.3f} ratio={rep.ratio:.5f} {rep.classification}")
for cid, (fine, ok) in res.converged.items():
    print(f"  {cid} at h/2: ratio={fine:.5f} stable={ok}")
