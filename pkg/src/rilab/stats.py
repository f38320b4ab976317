"""Estimate containers and binomial interval helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

Z95 = 1.959963984540054


def fmt17(x: float) -> str:
    """Shortest round-trip decimal at 17 significant digits."""
    return "%.17g" % float(x)


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Two-sided Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes outside [0, trials]")
    n = float(trials)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n))
    # clamp the roundoff at the extremes so p always sits inside
    return max(0.0, min(center - half, p)), min(1.0, max(center + half, p))


def wilson_upper(successes: int, trials: int, z: float = Z95) -> float:
    """One-sided upper confidence bound (same z convention as the interval)."""
    return wilson_interval(successes, trials, z)[1]


@dataclass
class ExperimentEstimate:
    """One Monte Carlo estimate with its provenance and uncertainty.

    bias_bound is the declared deterministic truncation bias on top of the
    statistical interval; 0.0 means the estimator is exact in law.
    """

    kind: str
    params: dict
    trials: int
    successes: int
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    bias_bound: float = 0.0
    seed: int | None = None
    stream: tuple[int, ...] = ()
    notes: str = ""
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_counts(cls, kind: str, params: dict, successes: int, trials: int,
                    bias_bound: float = 0.0, seed: int | None = None,
                    stream: tuple[int, ...] = (), notes: str = "") -> "ExperimentEstimate":
        p = successes / trials
        lo, hi = wilson_interval(successes, trials)
        se = math.sqrt(max(p * (1.0 - p), 1e-300) / trials)
        return cls(kind=kind, params=params, trials=trials, successes=successes,
                   estimate=p, se=se, ci_low=lo, ci_high=hi, bias_bound=bias_bound,
                   seed=seed, stream=stream, notes=notes)

    def csv_row(self, columns: list[str]) -> str:
        vals = []
        for c in columns:
            if c in self.params:
                v = self.params[c]
            elif hasattr(self, c):
                v = getattr(self, c)
            elif c in self.extra:
                v = self.extra[c]
            else:
                raise KeyError(c)
            if isinstance(v, float):
                vals.append(fmt17(v))
            elif isinstance(v, tuple):
                vals.append("/".join(str(t) for t in v))
            else:
                vals.append(str(v))
        return ",".join(vals)
