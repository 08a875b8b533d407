"""Counter-based seed derivation and reproducible noise streams.

Every trajectory owns independent streams for the velocity noise, the
Lagrangian noise and the scalar initial condition.  Seeds come from a
SplitMix64 step: for a fixed master seed the flat counter
``index * n_tags + tag`` is pushed through the (bijective) SplitMix64
finalizer, so distinct (index, tag) pairs map to distinct seeds by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

STREAM_TAGS = ("velocity", "lagrangian", "scalar_ic")


def _fmix64(x: int) -> int:
    """SplitMix64 output finalizer (bijective on 64-bit integers)."""
    x &= _MASK
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK
    x ^= x >> 31
    return x


def derive_seed(master_seed: int, trajectory_index: int, stream_tag: str) -> int:
    """64-bit stream seed for (master_seed, trajectory_index, stream_tag)."""
    if stream_tag not in STREAM_TAGS:
        raise ValueError(f"unknown stream tag {stream_tag!r}")
    if trajectory_index < 0:
        raise ValueError("trajectory_index must be >= 0")
    counter = trajectory_index * len(STREAM_TAGS) + STREAM_TAGS.index(stream_tag)
    state = (master_seed + (counter + 1) * _GOLDEN) & _MASK
    return _fmix64(state)


@dataclass
class NoiseDraw:
    """A seeded stream of standard normal increments.

    Draws are consumed sequentially; identical (seed, draw sequence) gives
    bitwise-identical increments on one platform.
    """

    seed: int
    stream: str = "velocity"
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.rng = np.random.Generator(np.random.Philox(key=self.seed))

    def normals(self, shape) -> np.ndarray:
        return self.rng.standard_normal(shape)


def make_draw(master_seed: int, trajectory_index: int, stream_tag: str) -> NoiseDraw:
    return NoiseDraw(derive_seed(master_seed, trajectory_index, stream_tag), stream_tag)
