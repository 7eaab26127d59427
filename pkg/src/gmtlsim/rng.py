"""Counter-based deterministic random streams.

Every random decision in the simulator is drawn from a `Stream` keyed by
(seed, client_id, round, purpose, ...).  Streams are stateless functions of
(key, counter), so results do not depend on thread scheduling or on how many
draws other streams made.  The construction is fully specified below so that
another implementation can reproduce the exact same numbers:

- mix64(z): the splitmix64 finalizer
  (z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
   z *= 0x94D049BB133111EB; z ^= z >> 31, all mod 2^64).
- string key parts are hashed with FNV-1a 64 over their UTF-8 bytes.
- the stream key is folded as  h_0 = mix64(seed);
  h_{i+1} = mix64(h_i ^ (part_i + (i + 1) * GOLDEN))  with
  GOLDEN = 0x9E3779B97F4A7C15.
- the n-th raw draw is  u64_n = mix64(key ^ ((n + 1) * GOLDEN)).
- uniform(): ((u64 >> 11) + 1) / 2^53, in (0, 1].
- normal(): Box-Muller cosine branch, sqrt(-2 ln u1) * cos(2 pi u2),
  consuming exactly two raw draws.
- gamma(a): Marsaglia-Tsang squeeze for a >= 1; for a < 1 the boost
  gamma(a + 1) * uniform()^(1/a).
- randint(n): u64 % n (modulo bias is negligible for n << 2^64).
- shuffle: Fisher-Yates from the top index downward.
"""

from __future__ import annotations

import math

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & _M64
    return h


def _as_word(part) -> int:
    if isinstance(part, str):
        return fnv1a64(part)
    if isinstance(part, bool):
        return int(part)
    if isinstance(part, int):
        return part & _M64
    raise TypeError(f"stream key parts must be int or str, got {type(part).__name__}")


class Stream:
    """One keyed random stream with a 64-bit draw counter."""

    __slots__ = ("key", "counter")

    def __init__(self, seed: int, *parts):
        h = mix64(_as_word(seed))
        for i, part in enumerate(parts):
            h = mix64(h ^ ((_as_word(part) + (i + 1) * _GOLDEN) & _M64))
        self.key = h
        self.counter = 0

    def child(self, *parts) -> "Stream":
        """Derive an independent stream namespaced under this one."""
        return Stream(self.key, *parts)

    def u64(self) -> int:
        self.counter += 1
        return mix64(self.key ^ ((self.counter * _GOLDEN) & _M64))

    def uniform(self) -> float:
        return ((self.u64() >> 11) + 1) * (2.0 ** -53)

    def normal(self) -> float:
        u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> list[float]:
        return [self.normal() for _ in range(n)]

    def gamma(self, alpha: float) -> float:
        if alpha <= 0:
            raise ValueError("gamma requires alpha > 0")
        if alpha < 1.0:
            # Boost: G(a) = G(a + 1) * U^(1/a).
            return self.gamma(alpha + 1.0) * self.uniform() ** (1.0 / alpha)
        d = alpha - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self.normal()
            v = (1.0 + c * x) ** 3
            if v <= 0.0:
                continue
            u = self.uniform()
            if u < 1.0 - 0.0331 * x ** 4:
                return d * v
            if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
                return d * v

    def dirichlet(self, alpha: float, n: int) -> list[float]:
        draws = [self.gamma(alpha) for _ in range(n)]
        total = sum(draws)
        return [g / total for g in draws]

    def randint(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randint requires n > 0")
        return self.u64() % n

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        idx = list(range(n))
        self.shuffle(idx)
        return idx
