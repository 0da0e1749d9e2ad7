"""Distributed privilege control.

Each member derives the secret-id sets for its proof bundles from a keyed
PRF stream seeded by (iv, counter), so a verifier that has been handed a
violator's iv can reconstruct the expected sequence on the fly and screen
incoming sessions by exact match. The raw iv never crosses the air.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from math import comb
from typing import Optional, Sequence

from .numtheory import Rng, sample_unit

DEFAULT_SEARCH_WINDOW = 64

# One block is a sorted k-tuple of distinct ids in [1, n]; a sequence is
# mu pairwise-distinct blocks.
Block = tuple[int, ...]
Sequence_ = tuple[Block, ...]


class ParameterOverflow(ValueError):
    """mu exceeds the number of distinct k-subsets of [1, n]."""


@dataclass(frozen=True)
class RevocationEntry:
    iv: int
    last_known_counter: int
    reason: str = ""
    inserted_at: float = 0.0


@dataclass(frozen=True)
class Match:
    iv: int
    counter: int


@dataclass
class RevocationTable:
    entries: dict[int, RevocationEntry] = field(default_factory=dict)
    version: int = 0
    _screen_cache: Optional[tuple] = field(default=None, repr=False)

    def upsert(self, entry: RevocationEntry) -> None:
        self.entries[entry.iv] = entry
        self.version += 1
        self._screen_cache = None

    def remove(self, iv: int) -> None:
        if iv in self.entries:
            del self.entries[iv]
            self.version += 1
            self._screen_cache = None


class _PrfStream:
    """Counter-mode byte stream: SHA-256 over iv || counter || block || chunk."""

    def __init__(self, iv: int, counter: int, block_index: int, redraw: int):
        self._prefix = (
            b"seq-prf"
            + iv.to_bytes(8, "big")
            + counter.to_bytes(8, "big")
            + block_index.to_bytes(4, "big")
            + redraw.to_bytes(4, "big")
        )
        self._chunk = 0
        self._buf = b""

    def next_byte(self) -> int:
        if not self._buf:
            self._buf = hashlib.sha256(
                self._prefix + self._chunk.to_bytes(4, "big")
            ).digest()
            self._chunk += 1
        b, self._buf = self._buf[0], self._buf[1:]
        return b

    def next_id(self, n: int) -> int:
        # rejection sampling to stay uniform over [1, n]
        span = 256 - (256 % n)
        while True:
            b = self.next_byte()
            if n <= 256:
                if b < span:
                    return 1 + (b % n)
            else:
                hi = b
                lo = self.next_byte()
                v = hi << 8 | lo
                wide_span = 65536 - (65536 % n)
                if v < wide_span:
                    return 1 + (v % n)


def _draw_block(iv: int, counter: int, block_index: int, redraw: int, n: int, k: int) -> Block:
    stream = _PrfStream(iv, counter, block_index, redraw)
    ids: set[int] = set()
    while len(ids) < k:
        ids.add(stream.next_id(n))
    return tuple(sorted(ids))


def next_sequence(iv: int, counter: int, n: int, k: int, mu: int) -> Sequence_:
    """Deterministic mu-block sequence for one authentication session."""
    if not (1 <= k <= n) or mu < 1:
        raise ValueError("require 1 <= k <= n and mu >= 1")
    if mu > comb(n, k):
        raise ParameterOverflow(f"mu={mu} exceeds C({n},{k})={comb(n, k)}")
    blocks: list[Block] = []
    seen: set[Block] = set()
    for b in range(mu):
        redraw = 0
        while True:
            block = _draw_block(iv, counter, b, redraw, n, k)
            if block not in seen:
                break
            redraw += 1
        blocks.append(block)
        seen.add(block)
    return tuple(blocks)


def advance_counter(credential) -> None:
    """Bump the member's counter by one after a successful session."""
    credential.counter += 1


def broadcast_revocation(
    iv: int,
    counter_hint: int,
    tables: Sequence[RevocationTable],
    reason: str = "",
    inserted_at: float = 0.0,
) -> None:
    """Install the violator entry in every table; idempotent on repeats."""
    entry = RevocationEntry(
        iv=iv, last_known_counter=counter_hint, reason=reason, inserted_at=inserted_at
    )
    for table in tables:
        table.upsert(entry)


def _reconstruction_index(
    table: RevocationTable, n: int, k: int, mu: int, window: int
) -> dict[Sequence_, Match]:
    key = (table.version, n, k, mu, window)
    if table._screen_cache and table._screen_cache[0] == key:
        return table._screen_cache[1]
    index: dict[Sequence_, Match] = {}
    for entry in table.entries.values():
        for c in range(entry.last_known_counter, entry.last_known_counter + window + 1):
            seq = next_sequence(entry.iv, c, n, k, mu)
            index.setdefault(seq, Match(iv=entry.iv, counter=c))
    table._screen_cache = (key, index)
    return index


def screen_session(
    table: RevocationTable,
    observed_sets: Sequence[Sequence[int]],
    n: int,
    k: int,
    window: int = DEFAULT_SEARCH_WINDOW,
) -> Optional[Match]:
    """Exact-match the observed sets against every entry's reconstructed window.

    Returns a ``Match`` or None. Reconstructions are cached per table
    version so steady-state screening is one dict lookup.
    """
    if not table.entries:
        return None
    mu = len(observed_sets)
    observed = tuple(tuple(sorted(s)) for s in observed_sets)
    return _reconstruction_index(table, n, k, mu, window).get(observed)


def garble_witnesses(k: int, m: int, rng: Rng) -> tuple[int, ...]:
    """Random units substituted for a flagged track's master witnesses."""
    return tuple(sample_unit(rng, m) for _ in range(k))


def encode_broadcast(iv: int, counter_hint: int, reason: str, version: int) -> str:
    return json.dumps(
        {
            "format_version": 1,
            "kind": "revocation_broadcast",
            "iv": str(iv),
            "counter_hint": counter_hint,
            "reason": reason,
            "version": version,
        },
        sort_keys=True,
    )


def decode_broadcast(text: str) -> tuple[int, int, str, int]:
    d = json.loads(text)
    if d.get("kind") != "revocation_broadcast":
        raise ValueError("not a revocation broadcast record")
    return int(d["iv"]), d["counter_hint"], d["reason"], d["version"]
