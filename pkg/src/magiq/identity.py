"""Certificates, the local certificate authority and user/agent credentials.

The CA is a trusted local key directory (first registration wins) that signs
``(subject, public key)`` certificates with the reference hash-based scheme.
PQ-TLS key material is modelled as opaque public-key blobs: transport
security itself is provided by the simulated secure channels.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass, field
from typing import Callable

from .crypto import hash, sig_keygen, sig_sign, sig_verify
from .crypto.signatures import DEFAULT_HEIGHT, SignatureKeyPair
from .encoding import decode_exact, encode, to_str
from .errors import BadCertificate, UserRefused
from .policy import ContactPolicy, InitiatorPolicy, ResponderPolicy, parse_aid, uid_of

Rng = Callable[[int], bytes]


class KeyDirectory:
    """identity -> public key; only the first registration for an identity sticks."""

    def __init__(self):
        self._keys: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def register(self, identity: str, pk: bytes) -> bool:
        with self._lock:
            if identity in self._keys:
                return self._keys[identity] == pk
            self._keys[identity] = pk
            return True

    def lookup(self, identity: str) -> bytes | None:
        return self._keys.get(identity)

    def __contains__(self, identity: str) -> bool:
        return identity in self._keys


@dataclass(frozen=True)
class Certificate:
    subject: str
    pk: bytes
    sig: bytes

    def encode(self) -> bytes:
        return encode(self.subject, self.pk, self.sig)

    @classmethod
    def decode(cls, data: bytes) -> "Certificate":
        s, pk, sig = decode_exact(data, 3)
        return cls(to_str(s), pk, sig)


def cert_message(subject: str, pk: bytes) -> bytes:
    return encode("magiq/cert", subject, pk)


def verify_certificate(cert: Certificate, ca_pk: bytes) -> bool:
    return sig_verify(ca_pk, cert_message(cert.subject, cert.pk), cert.sig)


class CertificateAuthority:
    def __init__(self, height: int = 8, *, seed: bytes | None = None, rng: Rng = secrets.token_bytes):
        self.key = sig_keygen(height=height, seed=seed, rng=rng)
        self.directory = KeyDirectory()
        self._lock = threading.Lock()

    @property
    def pk(self) -> bytes:
        return self.key.public

    def issue(self, subject: str, pk: bytes) -> Certificate:
        with self._lock:
            if not self.directory.register(subject, pk):
                raise BadCertificate(f"{subject!r} is already bound to a different key")
            return Certificate(subject, pk, sig_sign(self.key, cert_message(subject, pk)))


# -- signed statements -----------------------------------------------------

def user_id_message(aid: str, pk_agent: bytes) -> bytes:
    return encode("magiq/agent-id", aid, pk_agent)


def user_agent_message(aid: str, endpoint: str, tls_pk: bytes, tls_pk_ta: bytes,
                       pk_ta: bytes) -> bytes:
    return encode("magiq/agent-info", aid, endpoint, tls_pk, tls_pk_ta, pk_ta)


def provider_agent_message(aid: str, tls_cert: Certificate, endpoint: str, pk_agent: bytes,
                           sig_info: bytes) -> bytes:
    return encode("magiq/agent-reg", aid, tls_cert.encode(), endpoint, pk_agent, sig_info)


@dataclass(frozen=True)
class AgentMetadata:
    """M_A = {ED_A, Cert^tls_A, pk^tls_A, pk_A}."""

    endpoint: str
    tls_cert: Certificate
    tls_pk: bytes
    pk: bytes

    def encode(self) -> bytes:
        return encode(self.endpoint, self.tls_cert.encode(), self.tls_pk, self.pk)

    @classmethod
    def decode(cls, data: bytes) -> "AgentMetadata":
        ed, cert, tls_pk, pk = decode_exact(data, 4)
        return cls(to_str(ed), Certificate.decode(cert), tls_pk, pk)


@dataclass(frozen=True)
class AgentInfo:
    """Identity bundle an agent presents: (Cert^ID_U, aid, M_A, σ^U_ID, σ^U_A)."""

    user_cert: Certificate
    aid: str
    metadata: AgentMetadata
    sig_id: bytes
    sig_info: bytes

    def encode(self) -> bytes:
        return encode(self.user_cert.encode(), self.aid, self.metadata.encode(), self.sig_id,
                      self.sig_info)

    @classmethod
    def decode(cls, data: bytes) -> "AgentInfo":
        cert, aid, meta, sid_, sinfo = decode_exact(data, 5)
        return cls(Certificate.decode(cert), to_str(aid), AgentMetadata.decode(meta), sid_, sinfo)


def verify_agent_info(info: AgentInfo, ca_pk: bytes, tls_pk_ta: bytes, pk_ta: bytes) -> bool:
    """The three user-side checks on an agent bundle: certificate and both user signatures."""
    if not verify_certificate(info.user_cert, ca_pk):
        return False
    try:
        if info.user_cert.subject != uid_of(info.aid):
            return False
    except ValueError:
        return False
    pk_u = info.user_cert.pk
    m = info.metadata
    return (sig_verify(pk_u, user_agent_message(info.aid, m.endpoint, m.tls_pk, tls_pk_ta, pk_ta),
                       info.sig_info)
            and sig_verify(pk_u, user_id_message(info.aid, m.pk), info.sig_id))


# -- principals ------------------------------------------------------------

SignHook = Callable[[str, bytes], bool]


def always_approve(kind: str, message: bytes) -> bool:
    return True


@dataclass
class User:
    """A user: password, identity signing key and certificate.

    ``approve`` is consulted before every signature on an agent's behalf
    (chain commitments, delegations), so tests can script refusals.
    """

    uid: str
    pwd: str
    key: SignatureKeyPair = field(repr=False)
    cert: Certificate
    tls_pk: bytes = field(repr=False, default=b"")
    approve: SignHook = field(default=always_approve, repr=False)

    @classmethod
    def create(cls, uid: str, ca: CertificateAuthority, *, pwd: str | None = None,
               height: int = DEFAULT_HEIGHT, rng: Rng = secrets.token_bytes) -> "User":
        key = sig_keygen(height=height, seed=rng(32))
        pwd = pwd if pwd is not None else rng(16).hex()
        return cls(uid, pwd, key, ca.issue(uid, key.public), tls_pk=hash(rng(32)))

    @property
    def pk(self) -> bytes:
        return self.key.public

    def sign(self, kind: str, message: bytes) -> bytes:
        if not self.approve(kind, message):
            raise UserRefused(f"user {self.uid} declined to sign {kind}")
        return sig_sign(self.key, message)


@dataclass
class Agent:
    """Agent identity, keys, signed registration material and local policies."""

    aid: str
    owner: User = field(repr=False)
    endpoint: str
    key: SignatureKeyPair = field(repr=False)
    tls_pk: bytes = field(repr=False)
    tls_cert: Certificate = field(repr=False)
    seed_key: bytes = field(repr=False)  # secret PRF key for chain seeds
    cp: ContactPolicy = field(default_factory=ContactPolicy)
    rcp: list[ResponderPolicy] = field(default_factory=list)
    icp: list[InitiatorPolicy] = field(default_factory=list)
    sig_id: bytes = field(default=b"", repr=False)
    sig_info: bytes = field(default=b"", repr=False)
    sig_ta: bytes = field(default=b"", repr=False)

    @classmethod
    def create(cls, owner: User, name: str, endpoint: str, ca: CertificateAuthority,
               tls_pk_ta: bytes, pk_ta: bytes, *, cp: ContactPolicy | None = None,
               height: int = DEFAULT_HEIGHT, rng: Rng = secrets.token_bytes) -> "Agent":
        aid = f"{owner.uid}:{name}"
        parse_aid(aid)
        key = sig_keygen(height=height, seed=rng(32))
        tls_pk = hash(rng(32))
        agent = cls(aid, owner, endpoint, key, tls_pk, ca.issue(aid, tls_pk),
                    seed_key=rng(32), cp=cp or ContactPolicy())
        agent.sig_id = owner.sign("agent-id", user_id_message(aid, key.public))
        agent.sig_info = owner.sign(
            "agent-info", user_agent_message(aid, endpoint, tls_pk, tls_pk_ta, pk_ta))
        return agent

    @property
    def pk(self) -> bytes:
        return self.key.public

    @property
    def metadata(self) -> AgentMetadata:
        return AgentMetadata(self.endpoint, self.tls_cert, self.tls_pk, self.key.public)

    @property
    def info(self) -> AgentInfo:
        return AgentInfo(self.owner.cert, self.aid, self.metadata, self.sig_id, self.sig_info)

    def sign(self, message: bytes) -> bytes:
        return sig_sign(self.key, message)
