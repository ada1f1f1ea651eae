"""Named-stream determinism and independence."""

import numpy as np

from ladderlab import rng


def test_same_seed_same_stream():
    a = rng.named_stream(123, "data").normal(size=8)
    b = rng.named_stream(123, "data").normal(size=8)
    assert np.array_equal(a, b)


def test_distinct_names_distinct_streams():
    a = rng.named_stream(123, "data").normal(size=8)
    b = rng.named_stream(123, "svm").normal(size=8)
    assert not np.array_equal(a, b)


def test_distinct_seeds_distinct_streams():
    a = rng.named_stream(1, "data").normal(size=8)
    b = rng.named_stream(2, "data").normal(size=8)
    assert not np.array_equal(a, b)


def test_split_indexing():
    a = rng.split(7, "gen", 0).normal(size=4)
    b = rng.split(7, "gen", 1).normal(size=4)
    c = rng.split(7, "gen", 0).normal(size=4)
    assert np.array_equal(a, c)
    assert not np.array_equal(a, b)
