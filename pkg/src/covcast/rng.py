"""Named random substreams derived from one root seed.

Every command derives all of its randomness from a single seed. Consumers
request a stream keyed by a purpose label (plus optional indices), so adding
a new consumer never shifts the draws seen by existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(root_seed: int, *purpose: int | str) -> np.random.Generator:
    """Return a PCG64 generator keyed by ``(root_seed, *purpose)``.

    String purpose parts are hashed (sha256) into entropy words; integer
    parts enter directly. The same arguments always yield the same stream.
    """
    words: list[int] = [int(root_seed) & _MASK64]
    for part in purpose:
        if isinstance(part, str):
            digest = hashlib.sha256(part.encode("utf-8")).digest()
            words.extend(
                int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)
            )
        else:
            words.append(int(part) & _MASK64)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))
