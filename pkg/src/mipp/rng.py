"""Deterministic byte-stream generator backing every seeded operation.

A SHA-256 counter-mode stream gives reproducible keys, ring randomness and
simulation nonces across platforms and Python versions.  It is *not* a
substitute for OS entropy: production key material must be drawn from
``secrets``/``os.urandom`` and fed in as the seed.
"""

from __future__ import annotations

import hashlib


def derive_seed(seed: bytes | str, label: bytes | str) -> bytes:
    """Derive an independent sub-seed for one named purpose."""
    return hashlib.sha256(_as_bytes(seed) + b"\x00" + _as_bytes(label)).digest()


def _as_bytes(value: bytes | str) -> bytes:
    if isinstance(value, str):
        return value.encode("utf-8")
    return bytes(value)


class ByteStream:
    """SHA-256 counter-mode pseudorandom byte stream over a seed.

    Two streams with equal (seed, label) produce identical output; any
    difference in either yields an unrelated stream.
    """

    def __init__(self, seed: bytes | str, label: bytes | str = b""):
        self._key = derive_seed(seed, label)
        self._counter = 0
        self._buffer = b""

    def take(self, n: int) -> bytes:
        """Return the next ``n`` bytes of the stream."""
        if n < 0:
            raise ValueError("byte count must be non-negative")
        while len(self._buffer) < n:
            block = hashlib.sha256(
                self._key + self._counter.to_bytes(8, "big")
            ).digest()
            self._counter += 1
            self._buffer += block
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def randbits(self, k: int) -> int:
        """Return a uniform integer in [0, 2**k)."""
        if k <= 0:
            raise ValueError("bit count must be positive")
        nbytes = (k + 7) // 8
        value = int.from_bytes(self.take(nbytes), "big")
        return value >> (nbytes * 8 - k)

    def randbelow(self, bound: int) -> int:
        """Return a uniform integer in [0, bound) by rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        k = bound.bit_length()
        while True:
            value = self.randbits(k)
            if value < bound:
                return value

    def randrange(self, lo: int, hi: int) -> int:
        """Return a uniform integer in [lo, hi)."""
        if hi <= lo:
            raise ValueError("empty range")
        return lo + self.randbelow(hi - lo)
