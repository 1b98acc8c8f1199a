"""Reproducible Gaussian streams.

Uniforms come from NumPy's Philox-4x64 counter-based bit generator (10
rounds, the Random123 constants).  The 128-bit key is ``seed | stream << 64``
so independent streams can be derived from one user seed.  Normals are
produced by the Box-Muller transform: for uniform pairs (u1, u2),
r = sqrt(-2 log(1 - u1)) and the outputs are r cos(2 pi u2), r sin(2 pi u2),
with all cosine outputs of a draw emitted before the sine outputs.
"""

from __future__ import annotations

import numpy as np

STATE_STREAM = 1
OBSERVATION_STREAM = 2
RESAMPLE_STREAM = 3
PRIOR_STREAM = 4


class GaussianStream:
    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.seed = int(seed)
        self.stream = int(stream)
        self._gen = np.random.Generator(np.random.Philox(key=self.seed | (self.stream << 64)))

    def uniform(self, size) -> np.ndarray:
        return self._gen.random(size)

    def normal(self, size) -> np.ndarray:
        shape = (size,) if isinstance(size, int) else tuple(size)
        n = int(np.prod(shape))
        half = (n + 1) // 2
        u1 = self._gen.random(half)
        u2 = self._gen.random(half)
        r = np.sqrt(-2.0 * np.log1p(-u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:n].reshape(shape)
