"""The Provider: user/agent registry, per-pair session counters and discovery.

The Provider is a shared service.  Registration and discovery take one lock,
so the counter check-and-decrement and the stateful signing key are never
raced.  Every state change is appended to an optional log of canonical
records; :meth:`Provider.load` replays it to rebuild identical state.
"""

from __future__ import annotations

import logging
import secrets
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .crypto import ct_equal, hash, hash_fields, sig_keygen, sig_sign, sig_verify
from .crypto.signatures import SignatureKeyPair
from .encoding import (EncodingError, append_log, decode, decode_exact, encode, read_log,
                       to_int, to_str)
from .errors import (AuthFailed, BadCertificate, BadSignature, BudgetExhausted, DuplicateAid,
                     DuplicateEndpoint, DuplicateUid, MagiqError, NotAuthorized, UnknownAgent,
                     UnknownUser, error_for_code)
from .identity import (AgentInfo, AgentMetadata, Certificate, provider_agent_message,
                       user_agent_message, user_id_message, verify_agent_info,
                       verify_certificate)
from .policy import NO_MATCH, ContactPolicy, parse_aid, resolve_budget, uid_of

log = logging.getLogger(__name__)

NONCE_SIZE = 16
PROVIDER_HEIGHT = 10


@dataclass
class UserRecord:
    uid: str
    pwd_hash: bytes
    id_cert: Certificate


@dataclass
class AgentRecord:
    aid: str
    owner_uid: str
    metadata: AgentMetadata
    cp: ContactPolicy
    sig_id: bytes
    sig_info: bytes
    policy_version: int = 0


@dataclass
class PairCounter:
    responder_aid: str
    initiator_aid: str
    remaining: int
    versions: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class AuthorizationToken:
    nonce: bytes
    responder: AgentInfo
    initiator_aid: str
    initiator_pk: bytes
    sig: bytes

    def signed_message(self) -> bytes:
        return authorization_message(self.nonce, self.responder, self.initiator_aid,
                                     self.initiator_pk)

    def encode(self) -> bytes:
        return encode(self.nonce, self.responder.encode(), self.initiator_aid, self.initiator_pk,
                      self.sig)

    @classmethod
    def decode(cls, data: bytes) -> "AuthorizationToken":
        nonce, resp, aid_i, pk_i, sig = decode_exact(data, 5)
        return cls(nonce, AgentInfo.decode(resp), to_str(aid_i), pk_i, sig)


def authorization_message(nonce: bytes, r: AgentInfo, aid_i: str, pk_i: bytes) -> bytes:
    return encode("magiq/authorize", nonce, r.user_cert.encode(), r.aid, r.metadata.encode(),
                  r.sig_id, r.sig_info, aid_i, pk_i)


def password_hash(uid: str, pwd: str) -> bytes:
    return hash_fields("magiq/pwd", uid, pwd)


def verify_authorization(token: AuthorizationToken, pk_ta: bytes, expected_responder_aid: str,
                         ca_pk: bytes, tls_pk_ta: bytes,
                         expected_initiator_aid: str | None = None) -> bool:
    """Initiator-side check of a discovery grant: user cert, both user signatures, σ_ac."""
    if token.responder.aid != expected_responder_aid:
        return False
    if expected_initiator_aid is not None and token.initiator_aid != expected_initiator_aid:
        return False
    if len(token.nonce) != NONCE_SIZE:
        return False
    if not verify_agent_info(token.responder, ca_pk, tls_pk_ta, pk_ta):
        return False
    return sig_verify(pk_ta, token.signed_message(), token.sig)


class Provider:
    def __init__(self, ca_pk: bytes, *, key: SignatureKeyPair | None = None,
                 height: int = PROVIDER_HEIGHT, log_path=None,
                 rng: Callable[[int], bytes] = secrets.token_bytes):
        self.ca_pk = ca_pk
        self.key = key if key is not None else sig_keygen(height=height, seed=rng(32))
        self.tls_pk = hash(self.key.public + b"tls")
        self.rng = rng
        self.users: dict[str, UserRecord] = {}
        self.agents: dict[str, AgentRecord] = {}
        self.endpoints: dict[str, str] = {}
        self.counters: dict[tuple[str, str], PairCounter] = {}
        self.issued_nonces: set[bytes] = set()
        self._lock = threading.RLock()
        self._log_path = Path(log_path) if log_path else None
        self._log = None
        self._replaying = False

    @property
    def pk(self) -> bytes:
        return self.key.public

    # -- persistence ------------------------------------------------------

    def _record(self, kind: str, *fields) -> None:
        if self._log_path is None or self._replaying:
            return
        if self._log is None:
            self._log = open(self._log_path, "ab")
        append_log(self._log, encode(kind, *fields))

    def close(self) -> None:
        if self._log is not None:
            self._log.close()
            self._log = None

    @classmethod
    def load(cls, log_path, ca_pk: bytes, key: SignatureKeyPair, **kw) -> "Provider":
        """Rebuild a Provider from its log; further changes append to the same file."""
        p = cls(ca_pk, key=key, log_path=log_path, **kw)
        if Path(log_path).exists():
            p._replaying = True
            try:
                for rec in read_log(log_path):
                    p._apply(decode(rec))
            finally:
                p._replaying = False
        return p

    def _apply(self, fields: list[bytes]) -> None:
        kind = to_str(fields[0])
        if kind == "user":
            uid, ph, cert = fields[1:]
            self.users[to_str(uid)] = UserRecord(to_str(uid), ph, Certificate.decode(cert))
        elif kind == "agent":
            aid, owner, meta, cp, s_id, s_info = fields[1:]
            rec = AgentRecord(to_str(aid), to_str(owner), AgentMetadata.decode(meta),
                              ContactPolicy.decode(cp), s_id, s_info)
            self.agents[rec.aid] = rec
            self.endpoints[rec.metadata.endpoint] = rec.aid
        elif kind == "policy":
            aid, cp = fields[1:]
            rec = self.agents[to_str(aid)]
            rec.cp = ContactPolicy.decode(cp)
            rec.policy_version += 1
        elif kind == "counter":
            r, i, remaining, vr, vi = fields[1:]
            key = (to_str(r), to_str(i))
            self.counters[key] = PairCounter(key[0], key[1], to_int(remaining),
                                             (to_int(vr), to_int(vi)))
        elif kind == "nonce":
            self.issued_nonces.add(fields[1])
        elif kind == "keyidx":
            st = self.key.secret
            st.next_index = max(st.next_index, to_int(fields[1]))
        else:
            raise EncodingError(f"unknown log record {kind!r}")

    # -- registration -----------------------------------------------------

    def register_user(self, uid: str, pwd: str, id_cert: Certificate) -> None:
        if id_cert.subject != uid or not verify_certificate(id_cert, self.ca_pk):
            raise BadCertificate(f"identity certificate for {uid!r} does not verify")
        # external identity proofing is out of scope: always accepted
        with self._lock:
            if uid in self.users:
                raise DuplicateUid(uid)
            rec = UserRecord(uid, password_hash(uid, pwd), id_cert)
            self.users[uid] = rec
            self._record("user", uid, rec.pwd_hash, id_cert.encode())
        log.info("registered user %s", uid)

    def _authenticate(self, uid: str, pwd: str) -> UserRecord:
        rec = self.users.get(uid)
        # hash anyway so unknown and wrong-password paths cost the same
        candidate = password_hash(uid, pwd)
        if rec is None or not ct_equal(candidate, rec.pwd_hash):
            raise AuthFailed(f"authentication failed for {uid!r}")
        return rec

    def register_agent(self, uid: str, pwd: str, aid: str, endpoint: str, cp: ContactPolicy,
                       tls_cert: Certificate, pk_agent: bytes, sig_id: bytes,
                       sig_info: bytes) -> bytes:
        with self._lock:
            user = self._authenticate(uid, pwd)
            parse_aid(aid)
            if uid_of(aid) != uid:
                raise AuthFailed(f"{uid!r} cannot register agents outside its namespace")
            if aid in self.agents:
                raise DuplicateAid(aid)
            if endpoint in self.endpoints:
                raise DuplicateEndpoint(endpoint)
            if tls_cert.subject != aid or not verify_certificate(tls_cert, self.ca_pk):
                raise BadCertificate(f"TLS certificate for {aid!r} does not verify")
            pk_u = user.id_cert.pk
            if not sig_verify(pk_u, user_agent_message(aid, endpoint, tls_cert.pk, self.tls_pk,
                                                       self.pk), sig_info):
                raise BadSignature("user signature on agent information does not verify")
            if not sig_verify(pk_u, user_id_message(aid, pk_agent), sig_id):
                raise BadSignature("user signature on agent identity key does not verify")
            meta = AgentMetadata(endpoint, tls_cert, tls_cert.pk, pk_agent)
            self.agents[aid] = AgentRecord(aid, uid, meta, cp, sig_id, sig_info)
            self.endpoints[endpoint] = aid
            self._record("agent", aid, uid, meta.encode(), cp.encode(), sig_id, sig_info)
            sig_ta = sig_sign(self.key, provider_agent_message(aid, tls_cert, endpoint, pk_agent,
                                                               sig_info))
            self._record("keyidx", self.key.secret.next_index)
        log.info("registered agent %s", aid)
        return sig_ta

    def update_policy(self, uid: str, pwd: str, aid: str, cp: ContactPolicy) -> None:
        with self._lock:
            self._authenticate(uid, pwd)
            rec = self.agents.get(aid)
            if rec is None:
                raise UnknownAgent(aid)
            if rec.owner_uid != uid:
                raise AuthFailed(f"{uid!r} does not own {aid!r}")
            rec.cp = cp
            rec.policy_version += 1
            self._record("policy", aid, cp.encode())

    # -- discovery --------------------------------------------------------

    def agent_info(self, aid: str) -> AgentInfo:
        rec = self.agents.get(aid)
        if rec is None:
            raise UnknownAgent(aid)
        return AgentInfo(self.users[rec.owner_uid].id_cert, aid, rec.metadata, rec.sig_id,
                         rec.sig_info)

    def discover(self, aid_i: str, aid_r: str) -> AuthorizationToken:
        with self._lock:
            rec_i = self.agents.get(aid_i)
            rec_r = self.agents.get(aid_r)
            if rec_i is None or rec_r is None:
                raise UnknownAgent(aid_i if rec_i is None else aid_r)
            key = (aid_r, aid_i)
            versions = (rec_r.policy_version, rec_i.policy_version)
            ctr = self.counters.get(key)
            if ctr is None or (ctr.remaining == 0 and ctr.versions != versions):
                b = resolve_budget(rec_r.cp, rec_i.cp, aid_r, aid_i)
                if b == NO_MATCH:
                    raise NotAuthorized(f"no contact rule pairs {aid_i} -> {aid_r}")
                ctr = PairCounter(aid_r, aid_i, b, versions)
                self.counters[key] = ctr
            if ctr.remaining <= 0:
                raise BudgetExhausted(f"session budget for {aid_i} -> {aid_r} is spent")
            nonce = self.rng(NONCE_SIZE)
            while nonce in self.issued_nonces:
                nonce = self.rng(NONCE_SIZE)
            info = self.agent_info(aid_r)
            sig = sig_sign(self.key, authorization_message(nonce, info, aid_i,
                                                           rec_i.metadata.pk))
            ctr.remaining -= 1
            self.issued_nonces.add(nonce)
            self._record("counter", aid_r, aid_i, ctr.remaining, *ctr.versions)
            self._record("nonce", nonce)
            self._record("keyidx", self.key.secret.next_index)
        return AuthorizationToken(nonce, info, aid_i, rec_i.metadata.pk, sig)

    def counter(self, aid_r: str, aid_i: str) -> int | None:
        ctr = self.counters.get((aid_r, aid_i))
        return None if ctr is None else ctr.remaining

    def audit(self) -> list[str]:
        """Agent ids whose stored user signatures no longer verify."""
        bad = []
        for aid, rec in self.agents.items():
            info = self.agent_info(aid)
            if not verify_agent_info(info, self.ca_pk, self.tls_pk, self.pk):
                bad.append(aid)
        return bad

    # -- wire service -----------------------------------------------------

    def handle_frame(self, data: bytes) -> bytes:
        return serve(self, data)


# Wire format: request = tag || encode(fields); response = tag || status || payload,
# status 0 = ok, status 1 = 4-octet big-endian error code.
REGISTER_USER = 0x01
REGISTER_AGENT = 0x02
UPDATE_POLICY = 0x03
DISCOVER = 0x04
REQUEST_TAGS = {REGISTER_USER, REGISTER_AGENT, UPDATE_POLICY, DISCOVER}

OK = 0
ERR = 1
_CODE = struct.Struct(">I")


def ok_response(tag: int, payload: bytes = b"") -> bytes:
    return bytes([tag, OK]) + payload


def error_response(tag: int, code: int) -> bytes:
    return bytes([tag, ERR]) + _CODE.pack(code)


def serve(provider: Provider, data: bytes) -> bytes:
    if not data:
        return error_response(0, MagiqError.code)
    tag, body = data[0], data[1:]
    try:
        f = decode(body)
        if tag == REGISTER_USER:
            uid, pwd, cert = f
            provider.register_user(to_str(uid), to_str(pwd), Certificate.decode(cert))
            return ok_response(tag)
        if tag == REGISTER_AGENT:
            uid, pwd, aid, ed, cp, cert, pk, s_id, s_info = f
            sig = provider.register_agent(to_str(uid), to_str(pwd), to_str(aid), to_str(ed),
                                          ContactPolicy.decode(cp), Certificate.decode(cert),
                                          pk, s_id, s_info)
            return ok_response(tag, sig)
        if tag == UPDATE_POLICY:
            uid, pwd, aid, cp = f
            provider.update_policy(to_str(uid), to_str(pwd), to_str(aid), ContactPolicy.decode(cp))
            return ok_response(tag)
        if tag == DISCOVER:
            aid_i, aid_r = f
            return ok_response(tag, provider.discover(to_str(aid_i), to_str(aid_r)).encode())
        return error_response(tag, MagiqError.code)
    except MagiqError as exc:
        return error_response(tag, exc.code)
    except (EncodingError, ValueError):
        return error_response(tag, MagiqError.code)


class ProviderClient:
    """Builds request frames and turns response frames back into results or errors."""

    def __init__(self, transport: Callable[[bytes], bytes | None]):
        self.transport = transport

    def _call(self, tag: int, *fields) -> bytes:
        resp = self.transport(bytes([tag]) + encode(*fields))
        if resp is None:
            raise MagiqError("no response from provider")
        return parse_response(tag, resp)

    def register_user(self, uid: str, pwd: str, cert: Certificate) -> None:
        self._call(REGISTER_USER, uid, pwd, cert.encode())

    def register_agent(self, agent, pwd: str | None = None) -> bytes:
        owner = agent.owner
        return self._call(REGISTER_AGENT, owner.uid, pwd if pwd is not None else owner.pwd,
                          agent.aid, agent.endpoint, agent.cp.encode(), agent.tls_cert.encode(),
                          agent.pk, agent.sig_id, agent.sig_info)

    def update_policy(self, uid: str, pwd: str, aid: str, cp: ContactPolicy) -> None:
        self._call(UPDATE_POLICY, uid, pwd, aid, cp.encode())

    def discover(self, aid_i: str, aid_r: str) -> AuthorizationToken:
        return AuthorizationToken.decode(self._call(DISCOVER, aid_i, aid_r))


def parse_response(tag: int, resp: bytes) -> bytes:
    if len(resp) < 2 or resp[0] != tag:
        raise MagiqError("malformed provider response")
    if resp[1] == OK:
        return resp[2:]
    (code,) = _CODE.unpack(resp[2:6])
    raise error_for_code(code)(f"provider returned error code {code}")
