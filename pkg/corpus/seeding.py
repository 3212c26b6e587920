import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _as_int(key):
    if isinstance(key, str):
        return int.from_bytes(hashlib.sha256(key.encode('utf-8')).digest()[:4], 'little')
    return int(key)


def derive_seed(base, *keys):
    """Independent, order-free seed for (base, key1, key2, ...)."""
    entropy = [_as_int(base)] + [_as_int(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


def splitmix64(value):
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def index_hash(seed, index):
    """Uniform value in [0, 1) that depends only on (seed, index)."""
    return splitmix64((splitmix64(seed & _MASK64) + index) & _MASK64) / float(1 << 64)
