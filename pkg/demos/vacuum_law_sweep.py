"""Empirical avoidance frequencies against the vacuum law.

For a few small target sets A the probability that the occupied set
misses A is exp(-u cap(A)). This sweep samples windows at increasing
level u and prints the empirical frequency next to the closed form,
with the Wilson interval and the declared truncation bias.

Run:  python demos/vacuum_law_sweep.py [nsamples]
"""
import itertools
import math
import sys

import numpy as np

from rilab.interlace import vacuum_probability_test
from rilab.potential import GreenTable, capacity
from rilab.rng import RNGStream

SETS = [
    ("origin", [(0, 0, 0)]),
    ("edge pair", [(0, 0, 0), (1, 0, 0)]),
    ("radius-1 box", list(itertools.product((-1, 0, 1), repeat=3))),
]
LEVELS = (0.25, 0.5, 1.0, 2.0)


def main(nsamples: int = 4000) -> None:
    greens = GreenTable(d=3)
    root = RNGStream(20_26, (0,))
    print(f"{nsamples} samples per cell")
    print(f"{'set':<14}{'u':>6}{'cap(A)':>10}{'exact':>10}"
          f"{'observed':>10}{'ci':>20}{'bias':>10}")
    i = 0
    for name, pts in SETS:
        cap = capacity(np.array(pts), greens).capacity
        for u in LEVELS:
            est = vacuum_probability_test(pts, u, nsamples, root.child(i),
                                          greens=greens)
            exact = math.exp(-u * cap)
            ci = f"[{est.ci_low:.4f}, {est.ci_high:.4f}]"
            print(f"{name:<14}{u:>6.2f}{cap:>10.4f}{exact:>10.4f}"
                  f"{est.estimate:>10.4f}{ci:>20}{est.bias_bound:>10.1e}")
            i += 1
        print()


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 4000)
