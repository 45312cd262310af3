"""Counter-based random streams.

Every random draw in the package comes from a generator keyed by a tuple of
integers (for example ``(seed, tag, entity_index)``), so results do not depend
on the order in which entities are visited.
"""

from __future__ import annotations

import hashlib

import numpy as np

# stream tags, one per kind of draw
DEMAND = 1
SPEED = 2
BIAS = 3
GT_DEMAND = 4
UNIFORM = 5


def stream(*key: int) -> np.random.Generator:
    """Philox generator keyed by a tuple of non-negative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary printable parts."""
    text = "|".join(repr(p) if not isinstance(p, str) else p for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
