"""From a seed-event count to doubling bounds, end to end.

The chain: estimate the seed probability upper bound from a replicated
experiment, add the sprinkling errors of the decoupling step, and test
the launch inequality. When it passes, the recursion squares the bound
at every scale, so log2 P drops like -2^n; the script prints the whole
cascade. A frozen fast-vs-brute check on the dyadic event closes the
loop.

Run:  python demos/renorm_trigger_chain.py
"""
import numpy as np

from rilab.renorm import (RenormScheme, epsilon_error, hierarchical_event,
                          hierarchical_event_brute, trigger_from_counts)
from rilab.rng import RNGStream

L0, ELL0 = 1, 4


def cascade() -> None:
    eps = epsilon_error(1.0, L0, 400)
    print(f"sprinkling error at u=1, scale ratio 400: {eps:.3e}")
    # a clean run: zero seed events in a million trials
    rep = trigger_from_counts(0, 1_000_000, ELL0, eps, eps)
    print(f"trigger with 0/1e6 seed events: lhs={rep.lhs:.3e} "
          f"-> {rep.verdict}")
    for n, b in enumerate(rep.implied_log2_bounds):
        print(f"  scale {n}: log2 P <= {b:g}")
    # same counts, loud sprinkling noise: the certificate must refuse
    noisy = trigger_from_counts(0, 1_000_000, ELL0, 1e-6, 1e-6)
    print(f"same counts at eps=1e-6: lhs={noisy.lhs:.3f} -> {noisy.verdict}")


def spot_check(nfields: int = 50) -> None:
    scheme = RenormScheme(2, 4, d=3)
    pts = [tuple(int(c) for c in p)
           for p in scheme.lattice_points((0, 0, 0), 1)]
    root = RNGStream(12_19, (0,))
    agree = 0
    for i in range(nfields):
        vals = root.child(i).generator().random(len(pts)) < 0.5
        field = dict(zip(pts, np.asarray(vals, dtype=bool)))
        seed = lambda x: field[tuple(int(c) for c in x)]
        agree += (hierarchical_event(seed, (0, 0, 0), 1, scheme)
                  == hierarchical_event_brute(seed, (0, 0, 0), 1, scheme))
    print(f"dyadic event, fast vs brute: {agree}/{nfields} agree")


if __name__ == "__main__":
    cascade()
    spot_check()
