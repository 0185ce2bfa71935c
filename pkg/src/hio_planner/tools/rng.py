from __future__ import annotations

import math
from typing import List, Optional, Sequence

import numpy as np

TWO_POW_53 = 2.0**-53


class CounterRng:
    """Seeded counter-based stream: Philox-4x64 keyed by the seed.

    Every draw is derived from 64-bit raw outputs with documented transforms so the
    same seed yields the same stream on any platform:
      uniform   (raw >> 11) * 2^-53 in [0, 1)
      normal    Box-Muller on two uniforms, second value cached
      gamma     Marsaglia-Tsang, shape < 1 boosted by U^(1/shape)
      dirichlet normalized gammas
    """

    def __init__(self, seed: int) -> None:
        if seed < 0:
            raise ValueError(f"seed must be >= 0, got {seed}")
        self.seed = seed
        self._bits = np.random.Philox(key=seed)
        self._spare: Optional[float] = None

    def raw(self) -> int:
        return int(self._bits.random_raw())

    def uniform(self) -> float:
        return (self.raw() >> 11) * TWO_POW_53

    def uniform_range(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform()

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in [low, high)."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        return low + min(int(self.uniform() * (high - low)), high - low - 1)

    def normal(self) -> float:
        if self._spare is not None:
            value, self._spare = self._spare, None
            return value
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        radius = math.sqrt(-2.0 * math.log(u1))
        self._spare = radius * math.sin(2.0 * math.pi * u2)
        return radius * math.cos(2.0 * math.pi * u2)

    def gamma(self, shape: float) -> float:
        if shape <= 0:
            raise ValueError(f"gamma shape must be > 0, got {shape}")
        if shape < 1.0:
            boost = (1.0 - self.uniform()) ** (1.0 / shape)
            return self.gamma(shape + 1.0) * boost
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self.normal()
            v = (1.0 + c * x) ** 3
            if v <= 0:
                continue
            u = 1.0 - self.uniform()
            if math.log(u) < 0.5 * x * x + d - d * v + d * math.log(v):
                return d * v

    def dirichlet(self, alpha: Sequence[float]) -> np.ndarray:
        if not alpha or any(a <= 0 for a in alpha):
            raise ValueError("dirichlet concentrations must be non-empty and > 0")
        while True:
            draws = np.array([self.gamma(a) for a in alpha])
            total = float(np.sum(draws))
            if total > 0:
                return draws / total

    def permutation(self, n: int) -> List[int]:
        """Fisher-Yates shuffle of range(n)."""
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.integers(0, i + 1)
            order[i], order[j] = order[j], order[i]
        return order
