"""Exception types shared across the package."""


class CardauthError(Exception):
    """Base class for all package errors."""


class InvalidKeyError(CardauthError):
    """Cipher key has the wrong length or shape."""


class InvalidFieldError(CardauthError):
    """A text field contains the reserved separator byte."""


class MessageTooLargeError(CardauthError):
    """Integer plaintext is >= the RSA modulus."""


class KeyTooSmallError(CardauthError):
    """RSA modulus too small for byte-string chunking."""


class NoInverseError(CardauthError):
    """Modular inverse does not exist (operands not coprime)."""


class KeyGenerationError(CardauthError):
    """RSA key generation inputs are invalid."""


class MalformedCiphertextError(CardauthError):
    """RSA byte-string ciphertext fails framing or range checks."""


class FrameError(CardauthError):
    """Byte envelope is missing its magic, truncated, or inconsistent."""


class CardParseError(CardauthError):
    """Card text failed to parse; `field` names the offending line."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class AuthRejected(CardauthError):
    """An authentication check failed.

    `reason` is one of the kebab-case tokens in REJECTION_REASONS; protocol
    code maps it straight onto rejection envelopes and scenario outcomes.
    """

    def __init__(self, reason, detail=""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


class UnreadableSignature(AuthRejected):
    """Double-RSA signature did not open; `layer` is 'outer' or 'inner'."""

    def __init__(self, layer, detail=""):
        super().__init__("unreadable-signature", detail)
        self.layer = layer


class ScenarioError(CardauthError):
    """Scenario script is malformed or references unknown actors."""


# Canonical rejection reason tokens used in envelopes and scenario scripts.
REJECTION_REASONS = frozenset(
    {
        "malformed-frame",
        "malformed-payload",
        "digest-mismatch",
        "stale-timestamp",
        "wrong-outh-code",
        "blacklisted-user",
        "unknown-uid",
        "unknown-recipient",
        "unknown-sender",
        "wrong-otp",
        "otp-expired",
        "wrong-pin",
        "wrong-activation-code",
        "activation-expired",
        "unreadable-signature",
        "duplicate-email",
        "invalid-contact",
        "text-mismatch",
    }
)
