"""Round-based quadratic-residue zero-knowledge proofs.

Two variants live here: the basic commit/challenge/respond scheme used
throughout the authentication protocol, and the hardened variant that
binds every response to a per-session polynomial so recorded transcripts
cannot be replayed across sessions.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .numtheory import NotInvertible, Rng, gcd, mod_inv, sample_unit

DEFAULT_COEFF_MODULUS = (1 << 61) - 1  # public prime; must exceed any k in use
_HARDENED_MAX_RETRIES = 64


class DegenerateParameters(ValueError):
    """k = 0 or h = 0 would make the proof a vacuous accept."""


class ChallengeLengthMismatch(ValueError):
    """Prover and verifier disagree on the number of secrets per round."""


class DegenerateEvaluation(ArithmeticError):
    """A polynomial evaluation hit zero or a non-unit; round must re-run."""


class Variant(Enum):
    BASIC = "basic"
    HARDENED = "hardened"


@dataclass(frozen=True)
class ZkpRound:
    w: int
    challenge: tuple[int, ...]
    y: int


@dataclass(frozen=True)
class ZkpProof:
    secret_ids: tuple[int, ...]
    rounds: tuple[ZkpRound, ...]
    variant: Variant = Variant.BASIC
    poly_seed: Optional[bytes] = None


@dataclass(frozen=True)
class SessionPolynomial:
    coefficients: tuple[int, ...]
    modulus: int
    seed: bytes


# ---------------------------------------------------------------- basic


def prover_commit(rng: Rng, m: int) -> tuple[int, int]:
    """Pick private R, return (R, W) with W = +-R^2 mod m."""
    r = sample_unit(rng, m)
    w = (rng.choice_sign() * r * r) % m
    return r, w


def prover_respond(r: int, secrets: Sequence[int], challenge: Sequence[int], m: int) -> int:
    if len(secrets) != len(challenge):
        raise ChallengeLengthMismatch(
            f"{len(secrets)} secrets vs {len(challenge)} challenge bits"
        )
    y = r
    for s, b in zip(secrets, challenge):
        if b:
            y = (y * s) % m
    return y


def verify_round(
    w: int, challenge: Sequence[int], y: int, witnesses: Sequence[int], m: int
) -> bool:
    """Accept iff Y^2 = +-W * prod(I_i for challenged i) mod m.

    The +- absorbs the sign freedom in both the commitment and the
    witnesses (I_x = +-S_x^2).
    """
    if len(witnesses) != len(challenge):
        raise ChallengeLengthMismatch(
            f"{len(witnesses)} witnesses vs {len(challenge)} challenge bits"
        )
    lhs = (y * y) % m
    rhs = w % m
    for i_x, b in zip(witnesses, challenge):
        if b:
            rhs = (rhs * i_x) % m
    return lhs == rhs or lhs == (-rhs) % m


def draw_challenge(rng: Rng, k: int) -> tuple[int, ...]:
    bits = rng.randbits(k)
    return tuple((bits >> i) & 1 for i in range(k))


class HonestProver:
    """Prover holding the real secrets for one proof."""

    def __init__(self, secrets: Sequence[int], m: int, rng: Rng):
        self.secrets = list(secrets)
        self.m = m
        self.rng = rng
        self._r: Optional[int] = None

    def commit(self) -> int:
        self._r, w = prover_commit(self.rng, self.m)
        return w

    def respond(self, challenge: Sequence[int]) -> int:
        assert self._r is not None, "respond before commit"
        return prover_respond(self._r, self.secrets, challenge, self.m)


def verify_interactive(
    prover,
    witnesses: Sequence[int],
    k: int,
    h: int,
    m: int,
    verifier_rng: Rng,
    secret_ids: Sequence[int] = (),
) -> tuple[ZkpProof, bool]:
    """Run h basic rounds against any prover object (honest or adversarial).

    The prover must expose ``commit() -> W`` and ``respond(challenge) -> Y``.
    Returns the full transcript plus the verdict; verification continues
    through all rounds so the transcript is complete either way.
    """
    if k <= 0 or h <= 0:
        raise DegenerateParameters("k and h must both be >= 1")
    if len(witnesses) != k:
        raise ChallengeLengthMismatch(f"verifier holds {len(witnesses)} witnesses, k={k}")
    rounds = []
    ok = True
    for _ in range(h):
        w = prover.commit()
        challenge = draw_challenge(verifier_rng, k)
        y = prover.respond(challenge)
        rounds.append(ZkpRound(w=w, challenge=challenge, y=y))
        if not verify_round(w, challenge, y, witnesses, m):
            ok = False
    proof = ZkpProof(secret_ids=tuple(secret_ids), rounds=tuple(rounds))
    return proof, ok


def run_proof(
    secrets: Sequence[int],
    witnesses: Sequence[int],
    k: int,
    h: int,
    m: int,
    prover_rng: Rng,
    verifier_rng: Rng,
    secret_ids: Sequence[int] = (),
) -> tuple[ZkpProof, bool]:
    """Honest two-party basic proof: h rounds, accept iff all verify."""
    if len(secrets) != k:
        raise ChallengeLengthMismatch(f"prover holds {len(secrets)} secrets, k={k}")
    prover = HonestProver(secrets, m, prover_rng)
    return verify_interactive(prover, witnesses, k, h, m, verifier_rng, secret_ids)


def verify_proof(proof: ZkpProof, witnesses: Sequence[int], m: int) -> bool:
    """Re-verify a recorded basic transcript (offline check)."""
    if not proof.rounds:
        return False
    return all(
        verify_round(rd.w, rd.challenge, rd.y, witnesses, m) for rd in proof.rounds
    )


# ------------------------------------------------------------- hardened


def derive_session_polynomial(
    seed: bytes, k: int, coeff_modulus: int = DEFAULT_COEFF_MODULUS
) -> SessionPolynomial:
    """Derive k coefficients a_t = H(tag || seed || t) mod Q on both sides.

    An all-zero outcome is regenerated with an incremented domain tag so
    the polynomial is never identically zero.
    """
    if k < 2:
        raise DegenerateParameters("hardened variant requires k >= 2")
    tag = 0
    while True:
        coeffs = []
        for t in range(k):
            digest = hashlib.sha256(
                b"poly" + tag.to_bytes(4, "big") + seed + t.to_bytes(4, "big")
            ).digest()
            coeffs.append(int.from_bytes(digest, "big") % coeff_modulus)
        if any(coeffs):
            return SessionPolynomial(
                coefficients=tuple(coeffs), modulus=coeff_modulus, seed=seed
            )
        tag += 1


def _poly_factor(poly: SessionPolynomial, base: int, challenge: Sequence[int], scale: int, m: int) -> int:
    """Inner sum  sum_t a_t * base^(scale*t*b_t)  mod m."""
    total = 0
    for t, (a_t, b_t) in enumerate(zip(poly.coefficients, challenge)):
        total = (total + a_t * pow(base, scale * t * b_t, m)) % m
    return total


def hardened_respond(
    r: int,
    secrets: Sequence[int],
    challenge: Sequence[int],
    poly: SessionPolynomial,
    m: int,
) -> int:
    """Y = R^2 * prod_i( sum_t a_t * S_i^(2t*b_t) ) mod m."""
    if len(secrets) != len(challenge) or len(challenge) != len(poly.coefficients):
        raise ChallengeLengthMismatch("secrets/challenge/coefficients disagree")
    g = 1
    for s in secrets:
        inner = _poly_factor(poly, s, challenge, 2, m)
        if inner == 0 or gcd(inner, m) != 1:
            raise DegenerateEvaluation("inner sum is not a unit; re-run the round")
        g = (g * inner) % m
    return (r * r % m) * g % m


def hardened_verify(
    w: int,
    challenge: Sequence[int],
    y: int,
    witnesses: Sequence[int],
    poly: SessionPolynomial,
    m: int,
) -> bool:
    """Accept iff Y * Y' = +-W with Y' = 1 / prod_i( sum_t a_t * I_i^(t*b_t) )."""
    if len(witnesses) != len(challenge) or len(challenge) != len(poly.coefficients):
        raise ChallengeLengthMismatch("witnesses/challenge/coefficients disagree")
    prod = 1
    for i_x in witnesses:
        prod = (prod * _poly_factor(poly, i_x, challenge, 1, m)) % m
    try:
        y_prime = mod_inv(prod, m)
    except NotInvertible:
        raise DegenerateEvaluation("witness-side product is not a unit; re-run")
    lhs = (y * y_prime) % m
    return lhs == w % m or lhs == (-w) % m


def run_hardened_proof(
    secrets: Sequence[int],
    witnesses: Sequence[int],
    poly: SessionPolynomial,
    h: int,
    m: int,
    prover_rng: Rng,
    verifier_rng: Rng,
    secret_ids: Sequence[int] = (),
) -> tuple[ZkpProof, bool]:
    """Honest hardened proof; degenerate rounds re-run with fresh R and challenge."""
    k = len(poly.coefficients)
    if k < 2 or h <= 0:
        raise DegenerateParameters("hardened variant requires k >= 2 and h >= 1")
    if len(secrets) != k or len(witnesses) != k:
        raise ChallengeLengthMismatch("party material does not match polynomial degree")
    rounds = []
    ok = True
    for _ in range(h):
        for _attempt in range(_HARDENED_MAX_RETRIES):
            r, w = prover_commit(prover_rng, m)
            challenge = draw_challenge(verifier_rng, k)
            try:
                y = hardened_respond(r, secrets, challenge, poly, m)
                accepted = hardened_verify(w, challenge, y, witnesses, poly, m)
            except DegenerateEvaluation:
                continue
            rounds.append(ZkpRound(w=w, challenge=challenge, y=y))
            if not accepted:
                ok = False
            break
        else:
            raise DegenerateEvaluation("could not find a non-degenerate round")
    proof = ZkpProof(
        secret_ids=tuple(secret_ids),
        rounds=tuple(rounds),
        variant=Variant.HARDENED,
        poly_seed=poly.seed,
    )
    return proof, ok


# -------------------------------------------------------- serialization


def _encode_int(v: int) -> bytes:
    raw = v.to_bytes((v.bit_length() + 7) // 8 or 1, "big")
    return len(raw).to_bytes(4, "big") + raw


def _decode_int(blob: bytes, off: int) -> tuple[int, int]:
    n = int.from_bytes(blob[off : off + 4], "big")
    off += 4
    return int.from_bytes(blob[off : off + n], "big"), off + n


def pack_challenge(challenge: Sequence[int]) -> bytes:
    k = len(challenge)
    bits = 0
    for i, b in enumerate(challenge):
        bits |= (b & 1) << i
    return k.to_bytes(2, "big") + bits.to_bytes((k + 7) // 8 or 1, "big")


def unpack_challenge(blob: bytes, off: int) -> tuple[tuple[int, ...], int]:
    k = int.from_bytes(blob[off : off + 2], "big")
    off += 2
    nbytes = (k + 7) // 8 or 1
    bits = int.from_bytes(blob[off : off + nbytes], "big")
    return tuple((bits >> i) & 1 for i in range(k)), off + nbytes


def encode_round(rd: ZkpRound) -> bytes:
    return _encode_int(rd.w) + pack_challenge(rd.challenge) + _encode_int(rd.y)


def decode_round(blob: bytes, off: int = 0) -> tuple[ZkpRound, int]:
    w, off = _decode_int(blob, off)
    challenge, off = unpack_challenge(blob, off)
    y, off = _decode_int(blob, off)
    return ZkpRound(w=w, challenge=challenge, y=y), off


def encode_proof(proof: ZkpProof) -> bytes:
    out = bytearray()
    out += (0 if proof.variant is Variant.BASIC else 1).to_bytes(1, "big")
    seed = proof.poly_seed or b""
    out += len(seed).to_bytes(2, "big") + seed
    out += len(proof.secret_ids).to_bytes(2, "big")
    for sid in proof.secret_ids:
        out += sid.to_bytes(4, "big")
    out += len(proof.rounds).to_bytes(2, "big")
    for rd in proof.rounds:
        out += encode_round(rd)
    return bytes(out)


def decode_proof(blob: bytes, off: int = 0) -> tuple[ZkpProof, int]:
    variant = Variant.BASIC if blob[off] == 0 else Variant.HARDENED
    off += 1
    seed_len = int.from_bytes(blob[off : off + 2], "big")
    off += 2
    poly_seed = blob[off : off + seed_len] if seed_len else None
    off += seed_len
    n_ids = int.from_bytes(blob[off : off + 2], "big")
    off += 2
    ids = []
    for _ in range(n_ids):
        ids.append(int.from_bytes(blob[off : off + 4], "big"))
        off += 4
    n_rounds = int.from_bytes(blob[off : off + 2], "big")
    off += 2
    rounds = []
    for _ in range(n_rounds):
        rd, off = decode_round(blob, off)
        rounds.append(rd)
    return (
        ZkpProof(
            secret_ids=tuple(ids),
            rounds=tuple(rounds),
            variant=variant,
            poly_seed=poly_seed,
        ),
        off,
    )
