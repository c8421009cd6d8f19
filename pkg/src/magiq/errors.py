"""Exception hierarchy.

Every error carries a stable numeric ``code`` used on the wire (4-octet error
codes in Provider responses and terminal session messages).  Protocol
verification failures additionally name the ``accountable`` role.
"""

from __future__ import annotations

INITIATOR = "initiator"
RESPONDER = "responder"


class MagiqError(Exception):
    code = 1

    def __init__(self, message: str = "", **info):
        super().__init__(message or type(self).__name__)
        self.info = info

    @property
    def name(self) -> str:
        return type(self).__name__


class PreconditionError(MagiqError, ValueError):
    code = 2


# crypto_kernel
class EmptyKey(MagiqError, ValueError):
    code = 10


class ZeroLength(MagiqError, ValueError):
    code = 11


class EmptyLeaves(MagiqError, ValueError):
    code = 12


class IndexOutOfRange(MagiqError, IndexError):
    code = 13


class KeyExhausted(MagiqError):
    code = 14


class UnknownScheme(MagiqError, KeyError):
    code = 15


class KeyReuse(MagiqError):
    code = 16


# policy_engine
class MalformedAid(MagiqError, ValueError):
    code = 20


class TooManyResponders(MagiqError, ValueError):
    code = 21


class PolicyParseError(MagiqError, ValueError):
    code = 22


# provider_registry
class DuplicateUid(MagiqError):
    code = 30


class BadCertificate(MagiqError):
    code = 31


class AuthFailed(MagiqError):
    code = 32


class DuplicateAid(MagiqError):
    code = 33


class DuplicateEndpoint(MagiqError):
    code = 34


class BadSignature(MagiqError):
    code = 35


class UnknownAgent(MagiqError):
    code = 36


class NotAuthorized(MagiqError):
    code = 37


class BudgetExhausted(MagiqError):
    code = 38


class UnknownUser(MagiqError):
    code = 39


# sessions: local (no peer blamed)
class UserRefused(MagiqError):
    code = 50


class OwnBudgetExhausted(MagiqError):
    code = 51


class PeerBudgetExhausted(MagiqError):
    code = 52


class Expired(MagiqError):
    code = 53


class InvalidState(MagiqError):
    code = 54


class NoChainLeft(MagiqError):
    code = 55


class GlobalExpired(MagiqError):
    code = 56


class ChainsExhausted(MagiqError):
    code = 57


class GlobalQuotaExhausted(MagiqError):
    code = 58


class ProtocolError(MagiqError):
    """A check on a received message failed; ``accountable`` names the sender role."""

    code = 60
    terminal = False

    def __init__(self, message: str = "", accountable: str | None = None, **info):
        super().__init__(message, **info)
        self.accountable = accountable


class BadProviderSig(ProtocolError):
    code = 61


class BadInitiatorSig(ProtocolError):
    code = 62


class BadUserSig(ProtocolError):
    code = 63


class BadToken(ProtocolError):
    code = 64


class BadTag(ProtocolError):
    code = 65


class ReplayedNonce(ProtocolError):
    code = 66


class BadProof(ProtocolError):
    code = 67


class CounterMismatch(ProtocolError):
    code = 68


class MalformedMessage(ProtocolError):
    code = 69


class QuotaExhausted(ProtocolError):
    code = 70
    terminal = True


class SessionExpired(ProtocolError):
    code = 71
    terminal = True


class PeerAborted(ProtocolError):
    """The peer sent a terminal error message."""

    code = 72


# netsim
class UnknownIdentity(MagiqError, KeyError):
    code = 80


class ScenarioParseError(MagiqError, ValueError):
    code = 81


def _all_subclasses(cls):
    for sub in cls.__subclasses__():
        yield sub
        yield from _all_subclasses(sub)


ERRORS_BY_CODE: dict[int, type[MagiqError]] = {c.code: c for c in _all_subclasses(MagiqError)}
ERRORS_BY_CODE[MagiqError.code] = MagiqError


def error_for_code(code: int) -> type[MagiqError]:
    return ERRORS_BY_CODE.get(code, MagiqError)
