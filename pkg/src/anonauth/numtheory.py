"""Arbitrary-precision modular arithmetic and Blum-modulus generation.

Everything here is deterministic given an explicit ``Rng``; no ambient
randomness is ever consulted.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

_TRIAL_DIVISION_LIMIT = 1 << 20
_MILLER_RABIN_ROUNDS = 64

_SMALL_PRIMES = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37]


class NotInvertible(ValueError):
    """Raised when a modular inverse is requested for a non-unit."""


class Rng:
    """Seedable, splittable PRNG state.

    Thin wrapper over ``random.Random`` that adds ``split()`` so callers
    can hand independent substreams to subtasks without sharing state.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._r = random.Random(seed)

    def split(self) -> "Rng":
        return Rng(self._r.getrandbits(64))

    def randbits(self, k: int) -> int:
        return self._r.getrandbits(k)

    def randrange(self, a: int, b: Optional[int] = None) -> int:
        return self._r.randrange(a, b)

    def randbytes(self, n: int) -> bytes:
        return self._r.getrandbits(8 * n).to_bytes(n, "big")

    def choice_sign(self) -> int:
        return 1 if self._r.getrandbits(1) else -1

    def shuffle(self, seq: list) -> None:
        self._r.shuffle(seq)

    def random(self) -> float:
        return self._r.random()


@dataclass(frozen=True)
class BlumModulus:
    """Public modulus m = p*q with p = q = 3 (mod 4).

    The factors are private to the issuing authority; ``public()`` strips
    them before the modulus is handed to protocol parties.
    """

    m: int
    bit_length: int
    p: Optional[int] = None
    q: Optional[int] = None

    def public(self) -> "BlumModulus":
        return BlumModulus(m=self.m, bit_length=self.bit_length)


def is_prime(n: int, rng: Optional[Rng] = None) -> bool:
    """Deterministic trial division below 2^20, Miller-Rabin above."""
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    if n < _TRIAL_DIVISION_LIMIT:
        d = 41
        while d * d <= n:
            if n % d == 0:
                return False
            d += 2
        return True
    witness_rng = rng if rng is not None else Rng(n & 0xFFFFFFFF)
    d = n - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(_MILLER_RABIN_ROUNDS):
        a = witness_rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def jacobi(a: int, m: int) -> int:
    """Jacobi symbol (a/m) for odd m >= 3."""
    if m < 3 or m % 2 == 0:
        raise ValueError("modulus must be odd and >= 3")
    a %= m
    result = 1
    while a != 0:
        while a % 2 == 0:
            a //= 2
            if m % 8 in (3, 5):
                result = -result
        a, m = m, a
        if a % 4 == 3 and m % 4 == 3:
            result = -result
        a %= m
    return result if m == 1 else 0


def mod_pow(base: int, exp: int, m: int) -> int:
    if exp < 0:
        raise ValueError("exponent must be non-negative")
    return pow(base, exp, m)


def mod_inv(a: int, m: int) -> int:
    try:
        return pow(a, -1, m)
    except ValueError as exc:
        raise NotInvertible(f"{a} is not invertible mod {m}") from exc


def gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def is_unit(a: int, m: int) -> bool:
    return 1 <= a < m and gcd(a, m) == 1


def sample_unit(rng: Rng, m: int) -> int:
    """Uniform unit of Z_m by rejection."""
    if m < 3:
        raise ValueError("modulus must be >= 3")
    while True:
        a = rng.randrange(1, m)
        if gcd(a, m) == 1:
            return a


def _sample_prime_3_mod_4(rng: Rng, bits: int) -> int:
    while True:
        # top bit set for size, low two bits set so cand = 3 (mod 4)
        cand = rng.randbits(bits) | (1 << (bits - 1)) | 3
        if cand.bit_length() != bits:
            continue
        if is_prime(cand, rng):
            return cand


def generate_blum_modulus(bit_length: int, seed: int) -> BlumModulus:
    """Generate m = p*q with both primes = 3 (mod 4), deterministically.

    Below 12 bits there are too few suitable primes in a fixed size split,
    so small moduli draw both primes from the full enumerated pool instead.
    """
    if bit_length < 6:
        raise ValueError("bit_length must be >= 6 (each prime >= 3 bits)")
    rng = Rng(seed)
    if bit_length < 12:
        pool = [
            x
            for x in range(3, 1 << (bit_length - 1))
            if x % 4 == 3 and is_prime(x)
        ]
        for _ in range(100_000):
            p = pool[rng.randrange(0, len(pool))]
            q = pool[rng.randrange(0, len(pool))]
            m = p * q
            if p != q and m.bit_length() == bit_length:
                return BlumModulus(m=m, bit_length=bit_length, p=p, q=q)
        raise ValueError(f"no {bit_length}-bit Blum modulus found from seed {seed}")
    p_bits = bit_length // 2
    q_bits = bit_length - p_bits
    while True:
        p = _sample_prime_3_mod_4(rng, p_bits)
        q = _sample_prime_3_mod_4(rng, q_bits)
        if p == q:
            continue
        m = p * q
        if m.bit_length() == bit_length:
            return BlumModulus(m=m, bit_length=bit_length, p=p, q=q)
