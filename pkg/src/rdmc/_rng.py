"""Seeded per-particle random streams.

Every particle owns an independent Philox stream keyed by ``(seed, stage, step,
particle)``, so the numbers a particle consumes never depend on how many other
particles share the batch or in which order they are processed.
"""
from __future__ import annotations

import numpy as np

# spawn-key stage tags
STAGE_INIT = 0
STAGE_STEP = 1
STAGE_HAT_P = 2
STAGE_LMC = 3
STAGE_ULMC = 4
STAGE_REFERENCE = 5
STAGE_FINE_TUNE = 6
STAGE_MISC = 7

# cap on doubles drawn per block when pre-generating noise for many steps
_BLOCK_DOUBLES = 1 << 22


def _generator(seed: int, key: tuple[int, ...]) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


class ParticleStreams:
    """A bank of independent generators, one per particle.

    Draw methods take a full batch shape whose leading axis is the particle
    axis; particle ``i`` fills row ``i`` from its own generator.
    """

    def __init__(self, seed: int, size: int, key: tuple[int, ...] = ()):
        if size < 1:
            raise ValueError("need at least one stream")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self.generators = [_generator(self.seed, self.key + (i,)) for i in range(size)]

    def __len__(self) -> int:
        return len(self.generators)

    def child(self, *key: int, size: int | None = None) -> "ParticleStreams":
        return ParticleStreams(self.seed, len(self) if size is None else size, self.key + key)

    def subset(self, index) -> "ParticleStreams":
        out = object.__new__(ParticleStreams)
        out.seed, out.key = self.seed, self.key
        out.generators = [self.generators[i] for i in np.atleast_1d(index)]
        return out

    def _check(self, shape):
        shape = tuple(shape)
        if not shape or shape[0] != len(self):
            raise ValueError(f"leading axis {shape[:1]} does not match {len(self)} streams")
        return shape

    def standard_normal(self, shape) -> np.ndarray:
        shape = self._check(shape)
        return np.stack([g.standard_normal(shape[1:]) for g in self.generators])

    def random(self, shape) -> np.ndarray:
        shape = self._check(shape)
        return np.stack([g.random(shape[1:]) for g in self.generators])


class ZeroNoise:
    """Noise source returning zeros; isolates the drift part of an integrator."""

    def standard_normal(self, shape) -> np.ndarray:
        return np.zeros(shape)

    def random(self, shape) -> np.ndarray:
        return np.full(shape, 0.5)


def as_streams(rng, size: int, key: tuple[int, ...] = ()):
    """Coerce ``rng`` into something with batched draw methods.

    Integers become a :class:`ParticleStreams` bank; generators and noise
    stubs pass through unchanged.
    """
    if isinstance(rng, (int, np.integer)):
        return ParticleStreams(int(rng), size, key)
    if isinstance(rng, ParticleStreams) and len(rng) != size:
        raise ValueError(f"{len(rng)} streams for {size} particles")
    return rng


def normal_steps(rng, steps: int, shape):
    """Yield ``steps`` standard-normal arrays of ``shape``, drawn in blocks.

    For a :class:`ParticleStreams` bank each particle draws its whole block at
    once; sequential draws from one generator concatenate, so the values are
    independent of the block size.
    """
    shape = tuple(shape)
    per_step = int(np.prod(shape))
    block = max(1, min(steps, _BLOCK_DOUBLES // max(per_step, 1)))
    done = 0
    while done < steps:
        b = min(block, steps - done)
        if isinstance(rng, ParticleStreams):
            draws = np.stack([g.standard_normal((b,) + shape[1:]) for g in rng.generators], axis=1)
        else:
            draws = rng.standard_normal((b,) + shape)
        for j in range(b):
            yield draws[j]
        done += b
