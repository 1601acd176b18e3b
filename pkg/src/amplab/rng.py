"""Counter-based random streams with explicit substream derivation.

Every sampling routine in the package takes an :class:`RngStream` rather than
a bare generator so that (seed, stream_id) fully determines the output and
disjoint stream_ids give statistically independent streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One round of the splitmix64 mixer; a cheap 64-bit bijection."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by (seed, stream_id).

    The same pair always yields the identical sample sequence; distinct
    stream_ids key independent Philox counter streams.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def derive(self, k: int) -> "RngStream":
        """Substream k of this stream (same seed, mixed stream_id)."""
        mixed = splitmix64((self.stream_id ^ splitmix64(k & _MASK64)) & _MASK64)
        return RngStream(self.seed, mixed)
