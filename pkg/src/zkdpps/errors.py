"""Exception hierarchy shared by every layer of the middleware."""


class ZkDppsError(Exception):
    """Base class for all errors raised by this package."""


# field / sharing
class DuplicateIndex(ZkDppsError):
    pass


class ZeroIndex(ZkDppsError):
    pass


class InvalidReceiver(ZkDppsError):
    pass


class InsufficientDealers(ZkDppsError):
    pass


class InsufficientShares(ZkDppsError):
    pass


class MixedRounds(ZkDppsError):
    pass


class ExpiredRound(ZkDppsError):
    pass


class ShareVerificationFailed(ZkDppsError):
    def __init__(self, member: str, message: str = ""):
        self.member = member
        super().__init__(message or f"share from {member} failed commitment check")


# homomorphic engine
class ValueOutOfRange(ZkDppsError):
    pass


class RoundMismatch(ZkDppsError):
    pass


class LevelExceeded(ZkDppsError):
    pass


class CorruptCiphertext(ZkDppsError):
    pass


# ledger
class DuplicateTx(ZkDppsError):
    pass


class MalformedTx(ZkDppsError):
    pass


# bus
class BadTopic(ZkDppsError):
    pass


UnknownTopic = BadTopic


# processing / computation layers
class EmptyComputerPool(ZkDppsError):
    pass


class InsufficientQuorum(ZkDppsError):
    pass


class DuplicateId(ZkDppsError):
    pass


class TaintViolation(ZkDppsError):
    pass


class ConfigError(ZkDppsError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
