import numpy as np
from scipy import stats

from cisim import rng


def test_uniforms_open_interval_and_uniform():
    u = rng.uniforms(rng.derive_key(1), np.arange(200_000, dtype=np.uint64))
    assert np.all((u > 0) & (u < 1))
    assert stats.kstest(u, "uniform").pvalue > 0.001


def test_normals_are_standard():
    z = rng.normals(rng.derive_key(2), np.arange(200_000, dtype=np.uint64))
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.std() - 1) < 0.01


def test_keys_depend_on_path_and_broadcast():
    keys = rng.derive_key(7, np.arange(5))
    assert keys.shape == (5,)
    assert len(set(keys.tolist())) == 5
    assert int(rng.derive_key(7, 3)) == int(keys[3])
    assert int(rng.derive_key(7, "a")) != int(rng.derive_key(7, "b"))
    assert int(rng.derive_key(7)) != int(rng.derive_key(8))


def test_draws_are_pure_functions_of_key_and_counter():
    k = rng.derive_key(3, np.arange(4))
    c = rng.counter(np.array([0, 1, 2, 3]), rng.SLOT_NORMAL)
    a = rng.uniforms(k, c)
    b = np.array([rng.uniforms(k[i], c[i]) for i in range(4)])
    assert np.array_equal(a, b)


def test_counter_layout():
    assert int(rng.counter(2, 5)) == (2 << rng.SLOT_BITS) | 5


def test_stream_sequential_and_spawn():
    s = rng.Stream(11)
    first = s.uniform(3)
    second = s.uniform(3)
    assert not np.array_equal(first, second)
    again = rng.Stream(11)
    assert np.array_equal(again.uniform(6), np.concatenate([first, second]))
    child = s.spawn("x")
    assert child.position == 0 and int(child.key) != int(s.key)
    assert np.isscalar(float(s.normal()))
