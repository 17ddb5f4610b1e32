import numpy as np
import pytest

from rdmc._rng import ParticleStreams, ZeroNoise, as_streams, normal_steps


def test_streams_are_reproducible_and_keyed():
    a = ParticleStreams(1, 4, (2,)).standard_normal((4, 3))
    b = ParticleStreams(1, 4, (2,)).standard_normal((4, 3))
    c = ParticleStreams(1, 4, (3,)).standard_normal((4, 3))
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_particle_draws_independent_of_bank_size():
    big = ParticleStreams(5, 8, (1,)).standard_normal((8, 2))
    small = ParticleStreams(5, 3, (1,)).standard_normal((3, 2))
    assert np.array_equal(big[:3], small)


def test_child_and_subset():
    s = ParticleStreams(0, 4)
    assert s.child(7).key == (7,) and len(s.child(7, size=2)) == 2
    sub = s.subset([1, 3]).standard_normal((2, 1))
    ref = ParticleStreams(0, 4).standard_normal((4, 1))
    assert np.array_equal(sub, ref[[1, 3]])


def test_leading_axis_must_match():
    with pytest.raises(ValueError):
        ParticleStreams(0, 3).standard_normal((4, 2))


@pytest.mark.parametrize("steps,shape", [(7, (3, 2)), (1, (5, 1)), (300, (2, 4))])
def test_block_draws_equal_per_step_draws(steps, shape):
    blocked = list(normal_steps(ParticleStreams(9, shape[0]), steps, shape))
    bank = ParticleStreams(9, shape[0])
    single = [bank.standard_normal(shape) for _ in range(steps)]
    assert all(np.array_equal(a, b) for a, b in zip(blocked, single))
    gen_blocked = list(normal_steps(np.random.default_rng(3), steps, shape))
    gen = np.random.default_rng(3)
    assert all(np.array_equal(a, gen.standard_normal(shape)) for a in gen_blocked)


def test_zero_noise_and_coercion():
    z = ZeroNoise()
    assert not z.standard_normal((2, 3)).any() and np.all(z.random((2,)) == 0.5)
    assert isinstance(as_streams(4, 3), ParticleStreams)
    assert as_streams(z, 3) is z
    with pytest.raises(ValueError):
        as_streams(ParticleStreams(0, 2), 3)
