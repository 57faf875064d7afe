from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo (or propagated) estimate with its standard error."""

    value: float
    std_error: float
    samples: int
    seed: Any = None

    def __post_init__(self):
        if self.samples <= 0:
            raise ValueError("an estimate needs at least one sample")
        if not self.std_error >= 0:
            raise ValueError("std_error must be non-negative")

    @classmethod
    def from_samples(cls, values, seed=None) -> "Estimate":
        values = np.asarray(values, dtype=float)
        n = values.size
        se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(float(values.mean()), se, n, seed)

    @classmethod
    def from_fraction(cls, hits: int, n: int, seed=None) -> "Estimate":
        p = hits / n
        return cls(p, float(np.sqrt(p * (1.0 - p) / n)), n, seed)

    def scaled(self, factor: float) -> "Estimate":
        return Estimate(self.value * factor, self.std_error * abs(factor), self.samples, self.seed)


def combined_se(*estimates: Estimate) -> float:
    return float(np.sqrt(sum(e.std_error**2 for e in estimates)))
