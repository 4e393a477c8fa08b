"""Keyed random substreams on top of the Philox4x64-10 counter-based generator.

Every random draw in the simulator comes from a stream identified by
``(master_seed, purpose, index)``.  The Philox key is the first 16 bytes of
``SHA-256(b"tdcsim/v1|<seed>|<purpose>|<index>")`` read as two little-endian
64-bit words; the counter starts at zero.  Given the key, the raw 64-bit
output sequence is fully specified by the Philox4x64-10 algorithm
(Salmon et al., SC'11), so another implementation can reproduce the raw
streams from this description and the test vectors in ``tests/test_rng.py``.
"""

import hashlib

import numpy as np

KEY_PREFIX = b"tdcsim/v1"


def derive_key(seed, purpose, index=0):
    """Return the 128-bit Philox key for a substream as two uint64 words."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    msg = b"|".join([KEY_PREFIX, str(int(seed)).encode(), purpose.encode(), str(int(index)).encode()])
    digest = hashlib.sha256(msg).digest()
    return np.frombuffer(digest[:16], dtype="<u8").copy()


def substream(seed, purpose, index=0):
    """Generator for the ``(seed, purpose, index)`` substream."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, purpose, index)))


def raw_words(seed, purpose, index=0, count=4):
    """First ``count`` raw 64-bit outputs of a substream (for test vectors)."""
    bitgen = np.random.Philox(key=derive_key(seed, purpose, index))
    return [int(w) for w in bitgen.random_raw(count)]
