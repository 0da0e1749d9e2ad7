"""Two-way anonymous authentication session between a member (OBU) and a
roadside verifier (RSU).

Flow: beacon -> sealed request -> privacy negotiation -> secret-id set
announcement (screened against the revocation table before any proof
rounds run) -> member's membership proof -> verifier's mu-proof bundle ->
alpha-threshold decision -> closing reply.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from math import comb
from typing import Optional, Sequence

from . import envelopes, revocation, zkp
from .envelopes import (
    MSG_ALPHA_REPLY,
    MSG_AUTH_REQUEST,
    MSG_BEACON,
    MSG_MEMBERSHIP_PROOF,
    MSG_PROOF_BUNDLE,
    MSG_PROOF_SETS,
    NO_KEY_ID,
    EnvelopeFailure,
    encode_message,
)
from .keymgmt import Certificate, ObuCredential, RsuCredential, verify_certificate
from .numtheory import Rng
from .revocation import RevocationTable
from .zkp import Variant, ZkpProof

SUPPORTED_ALPHAS = frozenset({1, 2, 3, 4, 5})
DEFAULT_FRESHNESS_WINDOW = 5.0  # simulated seconds


class BadCertificate(ValueError):
    pass


class UnsupportedAlpha(ValueError):
    pass


class StaleTimestamp(ValueError):
    pass


class UndecryptableRequest(ValueError):
    pass


class MalformedSetRequest(ValueError):
    pass


class TooManyProofsRequested(ValueError):
    pass


class UnknownSession(KeyError):
    pass


class Outcome(Enum):
    ACCEPTED = "Accepted"
    REJECTED_INSUFFICIENT_PROOFS = "RejectedInsufficientProofs"
    REJECTED_MEMBERSHIP = "RejectedMembership"
    REJECTED_POLICY = "RejectedPolicy"
    REJECTED_REVOKED = "RejectedRevoked"


@dataclass(frozen=True)
class SessionConfig:
    alpha: int
    mu: int
    k: int
    h: int
    n: int
    serv_id: str
    variant: Variant = Variant.BASIC
    eager_stop: bool = False
    freshness_window: float = DEFAULT_FRESHNESS_WINDOW
    screen_window: int = revocation.DEFAULT_SEARCH_WINDOW

    def __post_init__(self):
        if self.alpha not in SUPPORTED_ALPHAS:
            raise UnsupportedAlpha(f"alpha={self.alpha} not in {sorted(SUPPORTED_ALPHAS)}")
        if not (1 <= self.alpha <= self.mu):
            raise ValueError(f"require 1 <= alpha <= mu, got alpha={self.alpha}, mu={self.mu}")
        if not (1 <= self.k < self.n):
            raise ValueError(f"require 1 <= k < n, got k={self.k}, n={self.n}")
        if self.h < 1:
            raise zkp.DegenerateParameters("h must be >= 1")
        if self.variant is Variant.HARDENED and self.k < 2:
            raise zkp.DegenerateParameters("hardened variant requires k >= 2")


@dataclass(frozen=True)
class Beacon:
    certificate: Certificate
    timestamp: float


@dataclass(frozen=True)
class AuthRequest:
    ciphertext: bytes  # sealed (group_id, T1, session key, serv_id, alpha)


@dataclass(frozen=True)
class ProofBundle:
    key_id: bytes
    items: tuple[bytes, ...]  # mu sealed proof transcripts


@dataclass(frozen=True)
class AuthResult:
    outcome: Outcome
    verified_count: int
    alpha: int

    def __post_init__(self):
        if self.outcome is Outcome.ACCEPTED and self.verified_count < self.alpha:
            raise ValueError("accepted result below the alpha threshold")


@dataclass
class ObservedProof:
    """What a channel tap sees of one verifier proof: the id set and rounds."""

    secret_ids: tuple[int, ...]
    rounds: tuple[zkp.ZkpRound, ...]


@dataclass
class SessionTranscript:
    frames: list[bytes] = field(default_factory=list)
    membership_proof: Optional[ZkpProof] = None
    bundle_observations: list[ObservedProof] = field(default_factory=list)
    requested_sets: tuple = ()
    key_id: bytes = NO_KEY_ID
    result: Optional[AuthResult] = None


class LogicalClock:
    """Deterministic session clock; no wall time anywhere in the protocol."""

    def __init__(self, start: float = 0.0):
        self._t = start

    def now(self) -> float:
        return self._t

    def advance(self, dt: float) -> None:
        self._t += dt


def _poly_seed(session_key: bytes, key_id: bytes, purpose: bytes, index: int) -> bytes:
    return session_key + key_id + purpose + index.to_bytes(4, "big")


def _session_poly(session_key: bytes, key_id: bytes, purpose: bytes, index: int, k: int):
    return zkp.derive_session_polynomial(_poly_seed(session_key, key_id, purpose, index), k)


@dataclass
class _RsuSession:
    key_id: bytes
    session_key: bytes
    group_id: int
    alpha: int
    serv_id: str
    config: SessionConfig
    requested_sets: tuple = ()
    membership_ok: bool = False
    screened_match: Optional[revocation.Match] = None
    closing_alpha: Optional[int] = None


class Rsu:
    """Verifier-side endpoint: beacons, session table, screening, proving."""

    def __init__(
        self,
        credential: RsuCredential,
        rng: Rng,
        clock: Optional[LogicalClock] = None,
        policy: Optional[dict[str, int]] = None,
        sym=None,
        seal=None,
        table: Optional[RevocationTable] = None,
    ):
        self.credential = credential
        self.rng = rng
        self.clock = clock or LogicalClock()
        # policy maps serv_id -> minimum permitted alpha
        self.policy = policy if policy is not None else {"ERS": 1, "NAV": 1, "INFO": 1}
        self.sym = sym or envelopes.AesGcmEnvelope()
        self.seal = seal or envelopes.EciesSeal()
        self.table = table if table is not None else RevocationTable()
        self.sessions: dict[bytes, _RsuSession] = {}
        # (group_id, iv) -> substituted master witnesses for flagged tracks
        self.garbled_tracks: dict[tuple[int, int], tuple[int, ...]] = {}

    # -- step 1: discovery ------------------------------------------------

    def beacon(self) -> Beacon:
        return Beacon(certificate=self.credential.certificate, timestamp=self.clock.now())

    # -- step 2: request registration -------------------------------------

    def register_session(self, request: AuthRequest, config: SessionConfig) -> bytes:
        try:
            plain = self.seal.open(self.credential.seal_private_key, request.ciphertext)
            body = json.loads(plain.decode())
        except (EnvelopeFailure, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise UndecryptableRequest("request did not open under this verifier's key") from exc
        t1 = body["t1"]
        if abs(self.clock.now() - t1) > config.freshness_window:
            raise StaleTimestamp(f"t1={t1} outside window at t={self.clock.now()}")
        while True:
            key_id = self.rng.randbytes(8)
            if key_id not in self.sessions and key_id != NO_KEY_ID:
                break
        self.sessions[key_id] = _RsuSession(
            key_id=key_id,
            session_key=bytes.fromhex(body["session_key"]),
            group_id=body["group_id"],
            alpha=body["alpha"],
            serv_id=body["serv_id"],
            config=config,
        )
        return key_id

    def negotiate_privacy(self, key_id: bytes, requested_alpha: int) -> Optional[int]:
        """Requested alpha when policy permits, else None (policy rejection)."""
        sess = self._session(key_id)
        min_alpha = self.policy.get(sess.serv_id)
        if min_alpha is None or requested_alpha < min_alpha:
            return None
        return requested_alpha

    # -- step 3: set announcement + revocation screening ------------------

    def receive_proof_sets(
        self, key_id: bytes, sets: Sequence[Sequence[int]]
    ) -> Optional[revocation.Match]:
        sess = self._session(key_id)
        cfg = sess.config
        canon = tuple(tuple(sorted(s)) for s in sets)
        if len(canon) != cfg.mu:
            raise MalformedSetRequest(f"expected {cfg.mu} sets, got {len(canon)}")
        if len(set(canon)) != len(canon):
            raise MalformedSetRequest("duplicate secret-id set in request")
        for s in canon:
            if len(s) != cfg.k or len(set(s)) != cfg.k:
                raise MalformedSetRequest(f"set {s} is not {cfg.k} distinct ids")
            if any(not (1 <= i <= cfg.n) for i in s):
                raise MalformedSetRequest(f"set {s} has ids outside [1, {cfg.n}]")
        sess.requested_sets = canon
        match = revocation.screen_session(
            self.table, canon, cfg.n, cfg.k, window=cfg.screen_window
        )
        if match is not None:
            sess.screened_match = match
            self.garble_master(sess.group_id, match.iv)
        return match

    def garble_master(self, group_id: int, iv: int) -> None:
        """Substitute random units for the flagged track's master witnesses."""
        k = len(self.credential.master_witnesses[group_id])
        self.garbled_tracks[(group_id, iv)] = revocation.garble_witnesses(
            k, self.credential.modulus, self.rng
        )

    def master_witnesses_for(self, group_id: int, iv: Optional[int] = None) -> tuple[int, ...]:
        if iv is not None and (group_id, iv) in self.garbled_tracks:
            return self.garbled_tracks[(group_id, iv)]
        return self.credential.master_witnesses[group_id]

    # -- step 4: membership verification (verifier side) ------------------

    def membership_witnesses(self, key_id: bytes) -> tuple[int, ...]:
        sess = self._session(key_id)
        iv = sess.screened_match.iv if sess.screened_match else None
        return self.master_witnesses_for(sess.group_id, iv)

    def check_membership_proof(self, key_id: bytes, sealed: bytes) -> bool:
        """Open K_session(T2, proof transcript) and re-verify every round."""
        sess = self._session(key_id)
        plain = self.sym.open(sess.session_key, sealed)
        (t2,) = struct.unpack(">d", plain[:8])
        if abs(self.clock.now() - t2) > sess.config.freshness_window:
            raise StaleTimestamp(f"t2={t2} outside window")
        proof, _ = zkp.decode_proof(plain[8:])
        witnesses = self.membership_witnesses(key_id)
        m = self.credential.modulus
        if proof.variant is Variant.HARDENED:
            poly = _session_poly(sess.session_key, key_id, b"membership", 0, sess.config.k)
            ok = bool(proof.rounds) and all(
                _hardened_round_ok(rd, witnesses, poly, m) for rd in proof.rounds
            )
        else:
            ok = zkp.verify_proof(proof, witnesses, m)
        ok = ok and len(proof.rounds) == sess.config.h
        sess.membership_ok = ok
        return ok

    # -- step 5: bundle generation (prover side) ---------------------------

    def generate_proof_bundle(self, key_id: bytes, challenge_rng: Rng) -> ProofBundle:
        """One proof per requested set, sealed under the session key.

        ``challenge_rng`` stands in for the remote verifier's challenge
        stream; in a live session it is driven by the member.
        """
        sess = self._session(key_id)
        cfg = sess.config
        pool = self.credential.pool_secrets[sess.group_id]
        m = self.credential.modulus
        items = []
        for idx, ids in enumerate(sess.requested_sets):
            secrets = [pool[i - 1] for i in ids]
            if cfg.variant is Variant.HARDENED:
                poly = _session_poly(sess.session_key, key_id, b"bundle", idx, cfg.k)
                proof, _ = zkp.run_hardened_proof(
                    secrets,
                    [s * s % m for s in secrets],
                    poly,
                    cfg.h,
                    m,
                    self.rng,
                    challenge_rng,
                    secret_ids=ids,
                )
            else:
                witnesses = [s * s % m for s in secrets]
                proof, _ = zkp.run_proof(
                    secrets, witnesses, cfg.k, cfg.h, m, self.rng, challenge_rng,
                    secret_ids=ids,
                )
            items.append(self.sym.seal(sess.session_key, zkp.encode_proof(proof), self.rng))
        return ProofBundle(key_id=key_id, items=tuple(items))

    def record_closing_reply(self, key_id: bytes, sealed: bytes) -> int:
        """Log the member's closing alpha value; access is not gated on it."""
        sess = self._session(key_id)
        plain = self.sym.open(sess.session_key, sealed)
        sess.closing_alpha = plain[0]
        return sess.closing_alpha

    def _session(self, key_id: bytes) -> _RsuSession:
        if key_id not in self.sessions:
            raise UnknownSession(key_id.hex())
        return self.sessions[key_id]


def _hardened_round_ok(rd: zkp.ZkpRound, witnesses, poly, m: int) -> bool:
    try:
        return zkp.hardened_verify(rd.w, rd.challenge, rd.y, witnesses, poly, m)
    except zkp.DegenerateEvaluation:
        return False


class Obu:
    """Member-side endpoint: single active session."""

    def __init__(
        self,
        credential: ObuCredential,
        root_public_key: bytes,
        rng: Rng,
        clock: Optional[LogicalClock] = None,
        sym=None,
        seal=None,
    ):
        self.credential = credential
        self.root_public_key = root_public_key
        self.rng = rng
        self.clock = clock or LogicalClock()
        self.sym = sym or envelopes.AesGcmEnvelope()
        self.seal = seal or envelopes.EciesSeal()
        self.session_key: Optional[bytes] = None
        self.key_id: bytes = NO_KEY_ID

    # -- step 1: request ----------------------------------------------------

    def start(self, beacon: Beacon, config: SessionConfig) -> AuthRequest:
        if config.alpha not in SUPPORTED_ALPHAS:
            raise UnsupportedAlpha(f"alpha={config.alpha}")
        if not verify_certificate(beacon.certificate, self.root_public_key):
            raise BadCertificate("beacon certificate does not verify under the root key")
        self.session_key = self.rng.randbytes(envelopes.SESSION_KEY_BYTES)
        body = json.dumps(
            {
                "group_id": self.credential.group_id,
                "t1": self.clock.now(),
                "session_key": self.session_key.hex(),
                "serv_id": config.serv_id,
                "alpha": config.alpha,
            },
            sort_keys=True,
        ).encode()
        return AuthRequest(
            ciphertext=self.seal.seal(beacon.certificate.public_key, body, self.rng)
        )

    def bind(self, key_id: bytes) -> None:
        self.key_id = key_id

    # -- step 3: secret-id sets ----------------------------------------------

    def choose_proof_sets(self, config: SessionConfig) -> tuple:
        """The mu pairwise-distinct k-id sets for this session, PRF-derived
        from (iv, counter) so a verifier holding the iv can screen them."""
        if config.mu > comb(config.n, config.k):
            raise TooManyProofsRequested(
                f"mu={config.mu} exceeds C({config.n},{config.k})"
            )
        return revocation.next_sequence(
            self.credential.iv, self.credential.counter, config.n, config.k, config.mu
        )

    # -- step 4: membership proof (prover side) -------------------------------

    def prove_membership(self, config: SessionConfig, challenge_rng: Rng) -> bytes:
        assert self.session_key is not None, "no open session"
        m = self.credential.modulus
        secrets = self.credential.master_key
        if config.variant is Variant.HARDENED:
            poly = _session_poly(self.session_key, self.key_id, b"membership", 0, config.k)
            proof, _ = zkp.run_hardened_proof(
                secrets,
                [s * s % m for s in secrets],
                poly,
                config.h,
                m,
                self.rng,
                challenge_rng,
            )
        else:
            witnesses = [s * s % m for s in secrets]
            proof, _ = zkp.run_proof(
                secrets, witnesses, config.k, config.h, m, self.rng, challenge_rng
            )
        plain = struct.pack(">d", self.clock.now()) + zkp.encode_proof(proof)
        return self.sym.seal(self.session_key, plain, self.rng)

    # -- step 6: bundle verification ------------------------------------------

    def verify_bundle(
        self,
        bundle: ProofBundle,
        config: SessionConfig,
        requested_sets: Sequence[Sequence[int]],
        observations: Optional[list[ObservedProof]] = None,
    ) -> AuthResult:
        assert self.session_key is not None, "no open session"
        if bundle.key_id != self.key_id:
            raise EnvelopeFailure("bundle tagged for a different session")
        m = self.credential.modulus
        verified = 0
        for idx, (item, ids) in enumerate(zip(bundle.items, requested_sets)):
            if config.eager_stop and verified >= config.alpha:
                break
            plain = self.sym.open(self.session_key, item)
            proof, _ = zkp.decode_proof(plain)
            if tuple(proof.secret_ids) != tuple(ids):
                continue
            witnesses = [self.credential.pool_witnesses[i - 1] for i in ids]
            if len(proof.rounds) != config.h:
                continue
            if proof.variant is Variant.HARDENED:
                poly = _session_poly(self.session_key, self.key_id, b"bundle", idx, config.k)
                ok = all(
                    _hardened_round_ok(rd, witnesses, poly, m) for rd in proof.rounds
                )
            else:
                ok = zkp.verify_proof(proof, witnesses, m)
            if ok:
                verified += 1
            if observations is not None:
                observations.append(
                    ObservedProof(secret_ids=tuple(ids), rounds=proof.rounds)
                )
        outcome = (
            Outcome.ACCEPTED
            if verified >= config.alpha
            else Outcome.REJECTED_INSUFFICIENT_PROOFS
        )
        return AuthResult(outcome=outcome, verified_count=verified, alpha=config.alpha)

    def closing_reply(self, alpha: int) -> bytes:
        assert self.session_key is not None
        return self.sym.seal(self.session_key, bytes([alpha]), self.rng)


def run_full_session(
    obu: Obu,
    rsu: Rsu,
    config: SessionConfig,
    observer: Optional[SessionTranscript] = None,
) -> tuple[AuthResult, SessionTranscript]:
    """Execute one complete session; the transcript doubles as the tap for
    the passive-observer threat model."""
    log = observer if observer is not None else SessionTranscript()

    beacon = rsu.beacon()
    log.frames.append(encode_message(MSG_BEACON, NO_KEY_ID, beacon.certificate.signed_payload()))

    request = obu.start(beacon, config)
    log.frames.append(encode_message(MSG_AUTH_REQUEST, NO_KEY_ID, request.ciphertext))

    key_id = rsu.register_session(request, config)
    obu.bind(key_id)
    log.key_id = key_id

    agreed = rsu.negotiate_privacy(key_id, config.alpha)
    if agreed is None:
        result = AuthResult(Outcome.REJECTED_POLICY, 0, config.alpha)
        log.result = result
        return result, log

    sets = obu.choose_proof_sets(config)
    log.requested_sets = sets
    log.frames.append(
        encode_message(
            MSG_PROOF_SETS,
            key_id,
            obu.sym.seal(obu.session_key, json.dumps([list(s) for s in sets]).encode(), obu.rng),
        )
    )
    match = rsu.receive_proof_sets(key_id, sets)
    if match is not None:
        result = AuthResult(Outcome.REJECTED_REVOKED, 0, config.alpha)
        log.result = result
        return result, log

    sealed_membership = obu.prove_membership(config, challenge_rng=rsu.rng)
    log.frames.append(encode_message(MSG_MEMBERSHIP_PROOF, key_id, sealed_membership))
    if not rsu.check_membership_proof(key_id, sealed_membership):
        result = AuthResult(Outcome.REJECTED_MEMBERSHIP, 0, config.alpha)
        log.result = result
        return result, log

    bundle = rsu.generate_proof_bundle(key_id, challenge_rng=obu.rng)
    for item in bundle.items:
        log.frames.append(encode_message(MSG_PROOF_BUNDLE, key_id, item))

    result = obu.verify_bundle(
        bundle, config, sets, observations=log.bundle_observations
    )
    if result.outcome is Outcome.ACCEPTED:
        reply = obu.closing_reply(result.alpha)
        log.frames.append(encode_message(MSG_ALPHA_REPLY, key_id, reply))
        rsu.record_closing_reply(key_id, reply)
        revocation.advance_counter(obu.credential)
    log.membership_proof = None  # membership rounds stay inside the envelope
    log.result = result
    return result, log
