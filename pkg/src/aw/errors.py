"""Exception types shared by every party in a session."""


class AWError(Exception):
    """Base class for all package errors."""


class EncodingError(AWError, ValueError):
    pass


class BadKeyError(AWError, ValueError):
    """Malformed key material (e.g. a seed that is not 32 bytes)."""


class DecryptError(AWError):
    """Sealed box could not be opened. Deliberately carries no cause."""

    def __init__(self) -> None:
        super().__init__("decryption failed")


class ManifestError(AWError):
    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class ParameterError(AWError, ValueError):
    pass


class IssueError(AWError):
    pass


class ParseError(AWError, ValueError):
    pass


class LockerError(AWError):
    pass


class SessionClosed(AWError):
    pass


class BudgetError(AWError):
    """Raised by the Verifier when its question budget is spent."""


class AttestationError(AWError):
    pass


class EstablishError(AWError):
    def __init__(self, layer: str) -> None:
        super().__init__(f"verification failed at layer: {layer}")
        self.layer = layer


class ProtocolAbort(AWError):
    """A session-ending protocol violation.

    ``cause`` is one of the stable strings in :data:`ABORT_CAUSES`; scenario
    outcomes are compared on it.
    """

    def __init__(self, cause: str, detail: str = "") -> None:
        super().__init__(f"{cause}: {detail}" if detail else cause)
        self.cause = cause
        self.detail = detail


class ChainDivergence(ProtocolAbort):
    def __init__(self, cause: str = "chain_divergence", detail: str = "") -> None:
        super().__init__(cause, detail)


# Causes raised while authenticating an inbound message (as opposed to a
# violation discovered in otherwise well-formed traffic).
REJECT_CAUSES = frozenset(
    {
        "head_signature_invalid",
        "measurement_mismatch",
        "quote_invalid",
        "ticket_invalid",
        "ticket_mismatch",
        "token_invalid",
        "question_signature_invalid",
    }
)

ABORT_CAUSES = REJECT_CAUSES | {
    "budget_exceeded",
    "chain_divergence",
    "content_hash_mismatch",
    "file_digest_mismatch",
    "final_head_mismatch",
    "manifest_invalid",
    "malformed_message",
    "question_counter_mismatch",
    "search_omission",
    "session_closed",
    "unmanifested_file",
    "unexpected_message",
}
