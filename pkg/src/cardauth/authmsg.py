"""Hashing, key derivation, authentication messages and the two-layer signature.

Every hash here is MD5: its 16-byte digest doubles as the 128-bit cipher key,
which is the whole reason the scheme picked it. MD5 is cryptographically
broken; this module exists to study the protocol, not to protect anything.

Concatenation uses a 0x1F separator between fields so that hash inputs are
injective at field boundaries ("ab"+"" never collides with "a"+"b").
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from . import rc4pr, rsa
from .errors import (
    AuthRejected,
    CardauthError,
    FrameError,
    InvalidFieldError,
    UnreadableSignature,
)
from .framing import frame_fields, parse_frame

SEPARATOR = b"\x1f"
DIGEST_LEN = 16
KEY_LEN = 16

DEFAULT_WINDOW_MS = 120_000


@dataclass(frozen=True)
class FreshnessWindow:
    """Maximum accepted receiver delay in milliseconds (closed interval)."""

    max_delay_ms: int = DEFAULT_WINDOW_MS


@dataclass(frozen=True)
class AuthMessage:
    """(uid, auth code, send timestamp) plus the digest binding them."""

    uid: str
    outh_code: int
    t1: int
    digest: bytes


@dataclass(frozen=True)
class SignatureBlock:
    """Contents of a user signature: who, digest of what, message key, when."""

    sender_uid: str
    msg_digest: bytes
    message_key: bytes
    t1: int


def hash_h(data: bytes) -> bytes:
    """The scheme's hash function h: MD5, 16 bytes."""
    return hashlib.md5(data).digest()


def canonical_concat(fields: list[str]) -> bytes:
    """UTF-8 encodings joined by single 0x1F bytes; injective per field list."""
    out = []
    for f in fields:
        if "\x1f" in f:
            raise InvalidFieldError(f"field {f!r} contains the separator byte")
        out.append(f.encode("utf-8"))
    return SEPARATOR.join(out)


def compute_outh_code(uid: str, upn: str, uml: str, umn: str) -> int:
    """User auth code: first 8 hash bytes of uid/PIN/email/mobile, as u64."""
    digest = hash_h(canonical_concat([uid, upn, uml, umn]))
    return int.from_bytes(digest[:8], "big")


def derive_secret_key(uid: str, upn: str) -> bytes:
    """User secret key K: 16-byte hash of uid and PIN."""
    return hash_h(canonical_concat([uid, upn]))


def derive_message_key(recipient_id: str, k: bytes) -> bytes:
    """Per-correspondent key K': hash of recipient id and K."""
    return hash_h(recipient_id.encode("utf-8") + SEPARATOR + k)


def _auth_digest(uid: str, outh_code: int, t1: int) -> bytes:
    return hash_h(canonical_concat([uid, str(outh_code), str(t1)]))


def build_auth_message(uid: str, outh_code: int, t1: int) -> AuthMessage:
    """Assemble the message and its trailing digest."""
    return AuthMessage(uid, outh_code, t1, _auth_digest(uid, outh_code, t1))


def encode_auth_message(m: AuthMessage) -> bytes:
    """Framed wire form: [uid, outh decimal, t1 decimal, digest]."""
    return frame_fields(
        [m.uid.encode("utf-8"), str(m.outh_code).encode(), str(m.t1).encode(), m.digest]
    )


def decode_auth_message(data: bytes) -> AuthMessage:
    try:
        uid_b, outh_b, t1_b, digest = parse_frame(data, expect=4)
        return AuthMessage(uid_b.decode("utf-8"), int(outh_b), int(t1_b), digest)
    except (FrameError, ValueError, UnicodeDecodeError) as exc:
        raise AuthRejected("malformed-frame", str(exc)) from exc


def seal_auth_message(m: AuthMessage, k: bytes) -> bytes:
    """Encrypt the framed message under K with the block-rekeyed cipher."""
    return rc4pr.rc4pr_apply(k, encode_auth_message(m))


def verify_freshness(t1: int, tc: int, w: FreshnessWindow) -> bool:
    """True iff 0 <= tc - t1 <= window. Future-dated t1 is rejected."""
    return 0 <= tc - t1 <= w.max_delay_ms


def verify_auth_frame(
    plain: bytes,
    tc: int,
    w: FreshnessWindow,
    expected_outh: int,
) -> AuthMessage:
    """Validate a decrypted auth frame; returns it or raises AuthRejected.

    Check order: frame parse, digest recomputation, freshness, auth-code
    equality. Reasons: malformed-frame, digest-mismatch, stale-timestamp,
    wrong-outh-code.
    """
    m = decode_auth_message(plain)
    if len(m.digest) != DIGEST_LEN or m.digest != _auth_digest(m.uid, m.outh_code, m.t1):
        raise AuthRejected("digest-mismatch", f"uid={m.uid}")
    if not verify_freshness(m.t1, tc, w):
        raise AuthRejected("stale-timestamp", f"delta={tc - m.t1}ms window={w.max_delay_ms}ms")
    if m.outh_code != expected_outh:
        raise AuthRejected("wrong-outh-code", f"uid={m.uid}")
    return m


def verify_auth_message(
    sealed: bytes,
    k: bytes,
    tc: int,
    w: FreshnessWindow,
    expected_outh: int,
) -> AuthMessage:
    """Decrypt a sealed message under K, then run the frame checks."""
    return verify_auth_frame(rc4pr.rc4pr_apply(k, sealed), tc, w, expected_outh)


def sign_message(
    sender_uid: str,
    msg: bytes,
    kprime: bytes,
    t1: int,
    sender_priv: rsa.RsaPrivateKey,
    recipient_pub: rsa.RsaPublicKey,
) -> bytes:
    """Two-layer signature: sign with sender's private key, wrap for recipient.

    Inner layer carries (sender id, h(msg), message key, t1) framed and
    encrypted with the sender's private exponent; the outer layer re-encrypts
    the whole inner ciphertext under the recipient's public key. The layers
    re-chunk independently.
    """
    block = frame_fields(
        [sender_uid.encode("utf-8"), hash_h(msg), kprime, str(t1).encode()]
    )
    inner = rsa.encrypt_bytes(block, sender_priv)
    return rsa.encrypt_bytes(inner, recipient_pub)


def open_signature(
    auth_dtl: bytes,
    recipient_priv: rsa.RsaPrivateKey,
    sender_pub: rsa.RsaPublicKey,
) -> SignatureBlock:
    """Peel both layers; raises UnreadableSignature naming the failing layer.

    "Readable" means: the frame magic survives both decryptions and all four
    fields parse within their declared lengths.
    """
    try:
        inner = rsa.decrypt_bytes(auth_dtl, recipient_priv)
    except CardauthError as exc:
        raise UnreadableSignature("outer", str(exc)) from exc
    try:
        plain = rsa.decrypt_bytes(inner, sender_pub)
        uid_b, digest, kprime, t1_b = parse_frame(plain, expect=4)
        uid = uid_b.decode("utf-8")
        t1 = int(t1_b)
    except (CardauthError, ValueError, UnicodeDecodeError) as exc:
        raise UnreadableSignature("inner", str(exc)) from exc
    if len(digest) != DIGEST_LEN or len(kprime) != KEY_LEN:
        raise UnreadableSignature("inner", "field widths wrong")
    return SignatureBlock(uid, digest, kprime, t1)
