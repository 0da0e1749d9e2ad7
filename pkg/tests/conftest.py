"""Shared fixtures: a tiny hand-built Blum modulus and a deployment factory."""

from dataclasses import dataclass

import pytest

from anonauth import keymgmt
from anonauth.envelopes import StubEnvelope, StubSeal, generate_seal_keypair
from anonauth.numtheory import BlumModulus, Rng, generate_blum_modulus
from anonauth.protocol import Obu, Rsu

# m = 3 * 7: both primes are 3 (mod 4); units of Z_21 number 12
M21 = BlumModulus(m=21, bit_length=5, p=3, q=7)


@dataclass
class Deployment:
    kdc: keymgmt.Kdc
    groups: list
    obu_creds: list
    rsu_cred: keymgmt.RsuCredential
    modulus: BlumModulus
    root: bytes
    stub: bool

    def make_rsu(self, seed: int, **kwargs) -> Rsu:
        if self.stub:
            kwargs.setdefault("sym", StubEnvelope())
            kwargs.setdefault("seal", StubSeal())
        return Rsu(self.rsu_cred, Rng(seed), **kwargs)

    def make_obu(self, seed: int, index: int = 0, **kwargs) -> Obu:
        if self.stub:
            kwargs.setdefault("sym", StubEnvelope())
            kwargs.setdefault("seal", StubSeal())
        return Obu(self.obu_creds[index], self.root, Rng(seed), **kwargs)


def build_deployment(
    seed: int,
    n: int,
    k: int,
    q: int = 1,
    modulus: BlumModulus = None,
    obus: int = 1,
    stub: bool = False,
) -> Deployment:
    if modulus is None:
        modulus = generate_blum_modulus(32, seed)
    rng = Rng(seed ^ 0x9E37)
    kdc = keymgmt.Kdc(seed=seed ^ 0x79B9)
    groups = keymgmt.form_groups(q, n, k, modulus, rng)
    priv, pub = generate_seal_keypair(rng)
    # the stub seal opens with public == private bytes
    cert = kdc.issue_certificate(0, priv if stub else pub)
    rsu_cred = keymgmt.provision_rsu(groups, 0, cert, priv, modulus)
    obu_creds = []
    for j in range(obus):
        group = groups[j % len(groups)]
        obu_creds.append(
            keymgmt.provision_obu(kdc, group, j + 1, iv=1000 + j, modulus=modulus)
        )
    return Deployment(
        kdc=kdc,
        groups=groups,
        obu_creds=obu_creds,
        rsu_cred=rsu_cred,
        modulus=modulus,
        root=kdc.root_public_key(),
        stub=stub,
    )


@pytest.fixture
def m21():
    return M21
