"""Named, counter-based random substreams.

Every random draw in the package goes through :func:`substream`, which keys a
Philox generator by a master seed plus a path of names/indices.  Two calls with
the same path always produce the same stream, and distinct paths are
statistically independent, so work can be split across processes without
changing results.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        raise TypeError("boolean substream keys are ambiguous")
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("substream keys must be non-negative")
        return int(key)
    if isinstance(key, str):
        # crc32 is stable across interpreter runs, unlike hash()
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"unsupported substream key {key!r}")


def substream(seed: int, *keys) -> np.random.Generator:
    """Generator for the stream addressed by ``(seed, *keys)``."""
    if seed is None:
        raise ValueError("an explicit seed is required")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit integer seed for the stream ``(seed, *keys)``.

    Useful when a child component takes a plain integer seed.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
