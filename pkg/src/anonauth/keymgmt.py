"""Offline key ceremony: group formation, witness generation, certificates,
and provisioning bundles for the two protocol roles.

The ceremony is a pure function of (q, n, k, modulus, seed). The issuing
authority exists only at build time; nothing here opens a network socket.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .numtheory import BlumModulus, Rng, sample_unit

BUNDLE_FORMAT_VERSION = 1


class InvalidParameters(ValueError):
    pass


class DuplicateIv(ValueError):
    pass


@dataclass(frozen=True)
class GroupSpec:
    """One group's full keying material (authority-side view).

    The pool secrets S_1..S_n stay verifier-side; their witnesses
    I_x = S_x^2 mod m go to members. The k master secrets go to members;
    their witnesses g_y go to verifiers.
    """

    group_id: int
    pool_secrets: tuple[int, ...]  # n entries, verifier-side
    pool_witnesses: tuple[int, ...]  # n entries, member-side
    master_key: tuple[int, ...]  # k entries, member-side
    master_witnesses: tuple[int, ...]  # k entries, verifier-side

    @property
    def n(self) -> int:
        return len(self.pool_secrets)

    @property
    def k(self) -> int:
        return len(self.master_key)


@dataclass(frozen=True)
class Certificate:
    rsu_id: int
    public_key: bytes  # RSU's asymmetric-seal public key
    issuer_id: str
    signature: bytes
    valid_from: float
    valid_to: float

    def signed_payload(self) -> bytes:
        body = {
            "rsu_id": self.rsu_id,
            "public_key": self.public_key.hex(),
            "issuer_id": self.issuer_id,
            "valid_from": self.valid_from,
            "valid_to": self.valid_to,
        }
        return json.dumps(body, sort_keys=True).encode()


@dataclass
class ObuCredential:
    """Member-side provisioned state. Holds witnesses, never pool secrets."""

    group_id: int
    member_id: int
    master_key: tuple[int, ...]
    pool_witnesses: tuple[int, ...]
    iv: int  # unique 64-bit initialization vector
    counter: int
    modulus: int

    @property
    def k(self) -> int:
        return len(self.master_key)

    @property
    def n(self) -> int:
        return len(self.pool_witnesses)


@dataclass
class RsuCredential:
    """Verifier-side provisioned state. Holds pool secrets, never master secrets."""

    rsu_id: int
    certificate: Certificate
    seal_private_key: bytes
    pool_secrets: dict[int, tuple[int, ...]]  # group_id -> S_1..S_n
    master_witnesses: dict[int, tuple[int, ...]]  # group_id -> g_1..g_k
    modulus: int


class Kdc:
    """Build-time authority: signs certificates and tracks issued IVs."""

    def __init__(self, seed: int, issuer_id: str = "kdc-root"):
        rng = Rng(seed)
        self._signing_key = Ed25519PrivateKey.from_private_bytes(rng.randbytes(32))
        self.issuer_id = issuer_id
        self._issued_ivs: set[int] = set()

    def root_public_key(self) -> bytes:
        return self._signing_key.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )

    def issue_certificate(
        self,
        rsu_id: int,
        rsu_public_key: bytes,
        valid_from: float = 0.0,
        valid_to: float = float(1 << 31),
    ) -> Certificate:
        unsigned = Certificate(
            rsu_id=rsu_id,
            public_key=rsu_public_key,
            issuer_id=self.issuer_id,
            signature=b"",
            valid_from=valid_from,
            valid_to=valid_to,
        )
        sig = self._signing_key.sign(unsigned.signed_payload())
        return Certificate(
            rsu_id=rsu_id,
            public_key=rsu_public_key,
            issuer_id=self.issuer_id,
            signature=sig,
            valid_from=valid_from,
            valid_to=valid_to,
        )

    def register_iv(self, iv: int) -> None:
        if iv in self._issued_ivs:
            raise DuplicateIv(f"iv {iv:#x} already provisioned")
        self._issued_ivs.add(iv)


def verify_certificate(cert: Certificate, root_public_key: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(root_public_key).verify(
            cert.signature, cert.signed_payload()
        )
        return True
    except InvalidSignature:
        return False


def form_groups(
    q: int, n: int, k: int, modulus: BlumModulus, rng: Rng
) -> list[GroupSpec]:
    """Generate q independent groups of keying material.

    Witnesses are the positive square of each secret; the verifier's
    sign-absorbing check keeps the negative representative valid too,
    and the polynomial-bound variant needs the positive one.
    """
    if q < 1:
        raise InvalidParameters("need at least one group")
    if not (1 <= k < n):
        raise InvalidParameters(f"require 1 <= k < n, got k={k}, n={n}")
    m = modulus.m
    groups = []
    for gid in range(1, q + 1):
        pool = tuple(sample_unit(rng, m) for _ in range(n))
        master = tuple(sample_unit(rng, m) for _ in range(k))
        groups.append(
            GroupSpec(
                group_id=gid,
                pool_secrets=pool,
                pool_witnesses=tuple(s * s % m for s in pool),
                master_key=master,
                master_witnesses=tuple(s * s % m for s in master),
            )
        )
    return groups


def provision_obu(
    kdc: Kdc, group: GroupSpec, member_id: int, iv: int, modulus: BlumModulus
) -> ObuCredential:
    if not (0 <= iv < 1 << 64):
        raise InvalidParameters("iv must be a 64-bit value")
    kdc.register_iv(iv)
    return ObuCredential(
        group_id=group.group_id,
        member_id=member_id,
        master_key=group.master_key,
        pool_witnesses=group.pool_witnesses,
        iv=iv,
        counter=0,
        modulus=modulus.m,
    )


def provision_rsu(
    groups: list[GroupSpec],
    rsu_id: int,
    certificate: Certificate,
    seal_private_key: bytes,
    modulus: BlumModulus,
) -> RsuCredential:
    return RsuCredential(
        rsu_id=rsu_id,
        certificate=certificate,
        seal_private_key=seal_private_key,
        pool_secrets={g.group_id: g.pool_secrets for g in groups},
        master_witnesses={g.group_id: g.master_witnesses for g in groups},
        modulus=modulus.m,
    )


# ---------------------------------------------------------- serialization
# Canonical JSON: sorted keys, big integers as decimal strings.


def _ints(values) -> list[str]:
    return [str(v) for v in values]


def _cert_to_dict(cert: Certificate) -> dict:
    return {
        "rsu_id": cert.rsu_id,
        "public_key": cert.public_key.hex(),
        "issuer_id": cert.issuer_id,
        "signature": cert.signature.hex(),
        "valid_from": cert.valid_from,
        "valid_to": cert.valid_to,
    }


def _cert_from_dict(d: dict) -> Certificate:
    return Certificate(
        rsu_id=d["rsu_id"],
        public_key=bytes.fromhex(d["public_key"]),
        issuer_id=d["issuer_id"],
        signature=bytes.fromhex(d["signature"]),
        valid_from=d["valid_from"],
        valid_to=d["valid_to"],
    )


def obu_credential_to_json(cred: ObuCredential) -> str:
    return json.dumps(
        {
            "format_version": BUNDLE_FORMAT_VERSION,
            "kind": "obu_credential",
            "group_id": cred.group_id,
            "member_id": cred.member_id,
            "master_key": _ints(cred.master_key),
            "pool_witnesses": _ints(cred.pool_witnesses),
            "iv": str(cred.iv),
            "counter": cred.counter,
            "modulus": str(cred.modulus),
        },
        sort_keys=True,
    )


def obu_credential_from_json(text: str) -> ObuCredential:
    d = json.loads(text)
    if d.get("kind") != "obu_credential" or d.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise InvalidParameters("not a supported obu credential record")
    return ObuCredential(
        group_id=d["group_id"],
        member_id=d["member_id"],
        master_key=tuple(int(v) for v in d["master_key"]),
        pool_witnesses=tuple(int(v) for v in d["pool_witnesses"]),
        iv=int(d["iv"]),
        counter=d["counter"],
        modulus=int(d["modulus"]),
    )


def rsu_credential_to_json(cred: RsuCredential) -> str:
    return json.dumps(
        {
            "format_version": BUNDLE_FORMAT_VERSION,
            "kind": "rsu_credential",
            "rsu_id": cred.rsu_id,
            "certificate": _cert_to_dict(cred.certificate),
            "seal_private_key": cred.seal_private_key.hex(),
            "pool_secrets": {str(g): _ints(v) for g, v in cred.pool_secrets.items()},
            "master_witnesses": {
                str(g): _ints(v) for g, v in cred.master_witnesses.items()
            },
            "modulus": str(cred.modulus),
        },
        sort_keys=True,
    )


def rsu_credential_from_json(text: str) -> RsuCredential:
    d = json.loads(text)
    if d.get("kind") != "rsu_credential" or d.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise InvalidParameters("not a supported rsu credential record")
    return RsuCredential(
        rsu_id=d["rsu_id"],
        certificate=_cert_from_dict(d["certificate"]),
        seal_private_key=bytes.fromhex(d["seal_private_key"]),
        pool_secrets={
            int(g): tuple(int(v) for v in vs) for g, vs in d["pool_secrets"].items()
        },
        master_witnesses={
            int(g): tuple(int(v) for v in vs)
            for g, vs in d["master_witnesses"].items()
        },
        modulus=int(d["modulus"]),
    )
