"""Private and public card records and their textual / encrypted forms.

Cards serialize one field per line as ``name =====> value`` in a fixed
order, which keeps the format injective and golden-file testable. The
16-byte secret key renders as underscore-separated decimal bytes; RSA keys
as decimal "n-e" / "n-d".
"""

from __future__ import annotations

import random
import re
import string
from dataclasses import dataclass

from . import rc4pr
from .errors import CardParseError, FrameError
from .framing import frame_fields, parse_frame
from .rsa import RsaPrivateKey, RsaPublicKey

PIN_LENGTH = 6
PIN_ALPHABET = string.ascii_uppercase + string.ascii_lowercase + string.digits
_PIN_RE = re.compile(r"^[A-Za-z0-9]{6}$")

_ARROW = " =====> "


@dataclass(frozen=True)
class PrivateCard:
    """Everything a user needs to talk to the server or to peers. Secret."""

    user_id: str
    user_mobile_number: str
    user_email: str
    outh_code: int
    pin_code: str
    s_key: bytes
    server_pub: RsaPublicKey
    pr_key: RsaPrivateKey
    pub_key: RsaPublicKey

    def __post_init__(self):
        if not _PIN_RE.match(self.pin_code):
            raise CardParseError(
                f"pin_code must be 6 chars of [A-Za-z0-9], got {self.pin_code!r}",
                field="pin_code",
            )
        if len(self.s_key) != 16:
            raise CardParseError("s_key must be 16 bytes", field="S_Key")
        if self.pr_key.n != self.pub_key.n:
            raise CardParseError("private_key and public_key moduli differ", field="private_key")


@dataclass(frozen=True)
class PublicCard:
    """The shareable record peers need to reach and verify a user."""

    user_id: str
    user_name: str
    user_mobile_number: str
    user_email: str
    pub_key: RsaPublicKey

    def __post_init__(self):
        if not self.user_id:
            raise CardParseError("user_id must be nonempty", field="User_Id")


_PRIVATE_FIELDS = (
    "User_Id",
    "User_Mobile_Number",
    "User_Email",
    "outh_code",
    "pin_code",
    "S_Key",
    "server_pub_key",
    "private_key",
    "public_key",
)

_PUBLIC_FIELDS = (
    "User_Id",
    "User_Name",
    "User_Mobile_Number",
    "User_Email",
    "public_key",
)


def _render_s_key(k: bytes) -> str:
    return "_".join(str(b) for b in k)


def serialize_card(card: PrivateCard | PublicCard) -> str:
    """One "name =====> value" line per field, in canonical order."""
    if isinstance(card, PrivateCard):
        values = (
            card.user_id,
            card.user_mobile_number,
            card.user_email,
            str(card.outh_code),
            card.pin_code,
            _render_s_key(card.s_key),
            card.server_pub.to_text(),
            card.pr_key.to_text(),
            card.pub_key.to_text(),
        )
        names = _PRIVATE_FIELDS
    else:
        values = (
            card.user_id,
            card.user_name,
            card.user_mobile_number,
            card.user_email,
            card.pub_key.to_text(),
        )
        names = _PUBLIC_FIELDS
    return "".join(f"{n}{_ARROW}{v}\n" for n, v in zip(names, values))


def _split_lines(text: str) -> list[tuple[str, str]]:
    pairs = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if _ARROW not in line:
            raise CardParseError(f"line lacks separator: {line!r}")
        name, value = line.split(_ARROW, 1)
        pairs.append((name.strip(), value.strip()))
    return pairs


def _parse_key_text(value: str, field: str) -> tuple[int, int]:
    try:
        n_s, x_s = value.split("-")
        return int(n_s), int(x_s)
    except ValueError as exc:
        raise CardParseError(f"bad key text {value!r}", field=field) from exc


def parse_card(text: str) -> PrivateCard | PublicCard:
    """Inverse of serialize_card; the field set decides the card kind.

    Canonical line order is enforced: a permuted card is rejected rather
    than silently reinterpreted.
    """
    pairs = _split_lines(text)
    names = tuple(n for n, _ in pairs)
    if names == _PRIVATE_FIELDS:
        return _parse_private(dict(pairs))
    if names == _PUBLIC_FIELDS:
        return _parse_public(dict(pairs))
    # Work out the most helpful error: wrong order vs missing field.
    for expected in (_PRIVATE_FIELDS, _PUBLIC_FIELDS):
        if set(names) == set(expected):
            raise CardParseError(f"fields out of canonical order: {names}")
    missing = (set(_PRIVATE_FIELDS) - set(names)) or (set(_PUBLIC_FIELDS) - set(names))
    field = sorted(missing)[0] if missing else None
    raise CardParseError(f"unrecognized field set {names}", field=field)


def _parse_private(fields: dict[str, str]) -> PrivateCard:
    try:
        outh = int(fields["outh_code"])
    except ValueError as exc:
        raise CardParseError("outh_code is not an integer", field="outh_code") from exc
    pin = fields["pin_code"]
    if not _PIN_RE.match(pin):
        raise CardParseError(f"bad pin_code {pin!r}", field="pin_code")
    try:
        key_bytes = bytes(int(t) for t in fields["S_Key"].split("_"))
    except ValueError as exc:
        raise CardParseError("S_Key bytes malformed", field="S_Key") from exc
    if len(key_bytes) != 16:
        raise CardParseError(f"S_Key has {len(key_bytes)} bytes, wants 16", field="S_Key")
    sn, se = _parse_key_text(fields["server_pub_key"], "server_pub_key")
    rn, rd = _parse_key_text(fields["private_key"], "private_key")
    un, ue = _parse_key_text(fields["public_key"], "public_key")
    return PrivateCard(
        user_id=fields["User_Id"],
        user_mobile_number=fields["User_Mobile_Number"],
        user_email=fields["User_Email"],
        outh_code=outh,
        pin_code=pin,
        s_key=key_bytes,
        server_pub=RsaPublicKey(sn, se),
        pr_key=RsaPrivateKey(rn, rd),
        pub_key=RsaPublicKey(un, ue),
    )


def _parse_public(fields: dict[str, str]) -> PublicCard:
    n, e = _parse_key_text(fields["public_key"], "public_key")
    return PublicCard(
        user_id=fields["User_Id"],
        user_name=fields["User_Name"],
        user_mobile_number=fields["User_Mobile_Number"],
        user_email=fields["User_Email"],
        pub_key=RsaPublicKey(n, e),
    )


def generate_pin(rng: random.Random) -> str:
    """Random 6-character PIN over [A-Za-z0-9]; case-sensitive."""
    return "".join(rng.choice(PIN_ALPHABET) for _ in range(PIN_LENGTH))


def encrypt_private_card(card: PrivateCard, k: bytes) -> bytes:
    """Frame the serialized card and encrypt it under K.

    The frame magic is what lets decrypt_private_card detect a wrong key.
    """
    return rc4pr.rc4pr_apply(k, frame_fields([serialize_card(card).encode("utf-8")]))


def decrypt_private_card(blob: bytes, k: bytes) -> PrivateCard:
    """Inverse of encrypt_private_card; wrong keys fail the frame check."""
    plain = rc4pr.rc4pr_apply(k, blob)
    try:
        (body,) = parse_frame(plain, expect=1)
        text = body.decode("utf-8")
    except (FrameError, UnicodeDecodeError) as exc:
        raise CardParseError(f"card blob did not decrypt: {exc}") from exc
    card = parse_card(text)
    if not isinstance(card, PrivateCard):
        raise CardParseError("decrypted blob is not a private card")
    return card
