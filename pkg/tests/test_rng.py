"""Substream derivation: frozen test vectors and independence checks."""

import hashlib

import numpy as np
import pytest

from tdcsim.rng import derive_key, raw_words, substream

# Frozen vectors: a port that implements SHA-256 keying plus Philox4x64-10
# must reproduce these raw 64-bit outputs.
VECTORS = {
    (1, "test", 0): [10989694489659725046, 7636168922935764134, 18087666179399314519,
                     2765093263824780204],
}


def test_key_is_sha256_prefix():
    d = hashlib.sha256(b"tdcsim/v1|1|test|0").digest()
    k = derive_key(1, "test", 0)
    assert int(k[0]) == int.from_bytes(d[:8], "little")
    assert int(k[1]) == int.from_bytes(d[8:16], "little")


@pytest.mark.parametrize("key,expected", list(VECTORS.items()))
def test_raw_vectors(key, expected):
    assert raw_words(*key, count=4) == expected


def test_more_vectors_are_stable():
    # recomputed from first principles each run so a silent numpy change shows up
    for seed, purpose, idx in [(0, "clock", 0), (2**64 - 1, "mismatch", 71), (42, "stimulus", 3)]:
        a = raw_words(seed, purpose, idx, 8)
        b = [int(x) for x in np.random.Philox(key=derive_key(seed, purpose, idx)).random_raw(8)]
        assert a == b


def test_distinct_streams():
    a = raw_words(1, "mismatch", 0)
    assert a != raw_words(1, "mismatch", 1)
    assert a != raw_words(2, "mismatch", 0)
    assert a != raw_words(1, "clock", 0)


def test_substream_reproducible():
    x = substream(7, "p", 3).standard_normal(100)
    y = substream(7, "p", 3).standard_normal(100)
    assert np.array_equal(x, y)


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_seed_range(seed):
    with pytest.raises(ValueError):
        derive_key(seed, "x")
