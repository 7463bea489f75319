"""Counter-keyed random streams.

Every random draw in the package comes from a generator keyed by a tuple of
integers (master seed, purpose tag, loop indices). Two calls with the same key
produce the same stream no matter which thread or in which order they run.
"""

import zlib

import numpy as np


def _tag(label):
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8"))
    value = int(label)
    if value < 0:
        raise ValueError(f"stream key components must be non-negative, got {value}")
    return value


def stream_key(seed, *labels):
    return [_tag(seed)] + [_tag(label) for label in labels]


def stream(seed, *labels):
    """Return a ``numpy.random.Generator`` keyed by ``(seed, *labels)``.

    String labels are hashed with CRC32 so that purposes stay disjoint, e.g.
    ``stream(7, "mda", i, j)`` never collides with ``stream(7, "lime", i)``.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(stream_key(seed, *labels))))


def derive_seed(seed, *labels):
    """A 32-bit integer seed derived from a key, for handing to other configs."""
    return int(np.random.SeedSequence(stream_key(seed, *labels)).generate_state(1)[0])
