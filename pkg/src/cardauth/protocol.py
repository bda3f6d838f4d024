"""Server and client state machines.

Registration hands a fresh user their uid, PIN and encrypted private card;
login runs the sealed-auth-message + OTP dance with a three-strike lockout;
the dashboard operations cover public-card distribution, user-to-user
messaging, and the secret-information request flows (server key, PIN resend
and change, private-card resend, contact change).

Everything moves as Envelope values over three simulated channels. Every
payload is a framed field list (framing module); field layouts per message
type are in MESSAGE_TYPES. Requests that the scheme leaves untimestamped
carry an explicit t1 field anyway, checked against the freshness window on
receipt, so that replaying any logged envelope after the window is rejected
uniformly.

State mutation is single-writer by contract: one envelope is handled at a
time, in simulator delivery order, and handlers never block.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import rsa
from .authmsg import (
    FreshnessWindow,
    build_auth_message,
    compute_outh_code,
    derive_message_key,
    derive_secret_key,
    encode_auth_message,
    hash_h,
    open_signature,
    seal_auth_message,
    sign_message,
    verify_auth_frame,
    verify_auth_message,
    verify_freshness,
)
from .cards import (
    PrivateCard,
    PublicCard,
    decrypt_private_card,
    encrypt_private_card,
    generate_pin,
    parse_card,
    serialize_card,
)
from .errors import AuthRejected, CardauthError, UnreadableSignature
from .framing import frame_fields, frame_texts, parse_frame
from .rc4pr import rc4pr_apply

NETWORK = "network"
EMAIL = "email"
SMS = "sms"
SERVER_ENDPOINT = "server"

# Wire registry: payload field layout per message type. "*_rsa" fields are
# encrypt_bytes outputs, "*_rc4pr" fields are block-rekeyed ciphertexts, and
# nested frames are noted next to the handlers that build them.
MESSAGE_TYPES = {
    "reg-email": ("t1", "credentials_rsa"),
    "reg-sms": ("t1", "server_pub_text"),
    "reg-auth": ("uid", "sealed_auth"),
    "private-card": ("t1", "card_rc4pr"),
    "rejection": ("t1", "reason", "detail"),
    "login-auth": ("uid", "auth_rsa"),
    "otp-sms": ("t1", "otp"),
    "otp-submit": ("t1", "uid", "otp"),
    "login-ok": ("t1", "uid"),
    "block-notice": ("t1", "device_name", "device_addr", "at", "provider"),
    "activation-sms": ("t1", "code"),
    "activate-request": ("t1", "uid", "code"),
    "activation-ok": ("t1", "uid"),
    "card-request": ("uid", "request_rsa"),
    "public-card": ("t1", "card_text"),
    "user-msg": ("cmsg_rc4pr", "auth_dtl_rsa"),
    "pubkey-request": ("t1", "uid"),
    "pubkey-sms": ("t1", "server_pub_text"),
    "pin-resend-request": ("t1", "uid"),
    "pin-change-request": ("uid", "request_rsa"),
    "pin-change-email": ("t1", "credentials_rsa", "card_rc4pr"),
    "card-resend-request": ("uid", "request_rsa"),
    "change-contact-request": ("uid", "request_rsa"),
}


@dataclass(frozen=True)
class Envelope:
    """One message in flight on a simulated channel."""

    channel: str
    msg_type: str
    sender: str
    recipient: str
    payload: bytes
    sent_at: int


@dataclass
class ServerConfig:
    window: FreshnessWindow = field(default_factory=FreshnessWindow)
    otp_ttl_ms: int = 300_000
    activation_ttl_ms: int = 3_600_000
    max_failures: int = 3
    prime_bits: int = 16


@dataclass
class UserRecord:
    """Server-side view of one registered user.

    The full user key bundle is retained (not just the public half) because
    PIN change and card resend rebuild the private card, which embeds the
    user's private key.
    """

    uid: str
    email: str
    mobile: str
    name: str
    pin: str
    user_keys: rsa.RsaKeyBundle
    server_keys: rsa.RsaKeyBundle
    stored_reg_message: bytes
    public_card: PublicCard


@dataclass(frozen=True)
class AuditRecord:
    """Outcome of one handled envelope, for defense-coverage assertions."""

    msg_type: str
    uid: str
    accepted: bool
    reason: str | None
    checks: frozenset[str]


def _reject(reason: str, detail: str = "", uid: str = "", followups=None):
    exc = AuthRejected(reason, detail)
    exc.uid = uid
    exc.followups = followups or []
    raise exc


def _texts(fields: list[bytes], n: int) -> list[str]:
    if len(fields) != n:
        _reject("malformed-payload", f"expected {n} fields, got {len(fields)}")
    try:
        return [f.decode("utf-8") for f in fields]
    except UnicodeDecodeError:
        _reject("malformed-payload", "field is not UTF-8")


def _int(text: str, what: str = "integer field") -> int:
    try:
        return int(text)
    except ValueError:
        _reject("malformed-payload", f"{what} is not an integer: {text!r}")


class AuthServer:
    """The authentication server: registry, blacklist, OTP store, handlers."""

    def __init__(self, rng: random.Random | int = 0, config: ServerConfig | None = None):
        self.rng = rng if isinstance(rng, random.Random) else random.Random(rng)
        self.config = config or ServerConfig()
        self.registry: dict[str, UserRecord] = {}
        self.blacklist: set[str] = set()
        self.fail_counts: dict[str, int] = {}
        self.otp_store: dict[str, tuple[str, int]] = {}
        self.activation_codes: dict[str, tuple[str, int]] = {}
        self.audit: list[AuditRecord] = []
        self._next_user = 1
        self._used_moduli: set[int] = set()
        self._checks: set[str] = set()
        self._uid = ""
        self._handlers = {
            "reg-auth": self._handle_reg_auth,
            "login-auth": self._handle_login_auth,
            "otp-submit": self._handle_otp_submit,
            "activate-request": self._handle_activate,
            "card-request": self._handle_card_request,
            "pubkey-request": self._handle_pubkey_request,
            "pin-resend-request": self._handle_pin_resend,
            "pin-change-request": self._handle_pin_change,
            "card-resend-request": self._handle_card_resend,
            "change-contact-request": self._handle_change_contact,
        }

    # ---------------- shared helpers ----------------

    def expected_outh(self, record: UserRecord) -> int:
        """Recompute the user's auth code from registry fields (never stored)."""
        return compute_outh_code(record.uid, record.pin, record.email, record.mobile)

    def _record(self, uid: str) -> UserRecord:
        rec = self.registry.get(uid)
        if rec is None:
            _reject("unknown-uid", uid, uid=uid)
        self._uid = uid
        return rec

    def _require_not_blacklisted(self, uid: str):
        if uid in self.blacklist:
            _reject("blacklisted-user", uid, uid=uid)

    def _check_fresh(self, t1: int, now: int, uid: str = "", followups=None):
        if not verify_freshness(t1, now, self.config.window):
            _reject("stale-timestamp", f"delta={now - t1}ms", uid=uid, followups=followups)
        self._checks.add("freshness")

    def _gen_digits(self, n: int) -> str:
        return "".join(str(self.rng.randrange(10)) for _ in range(n))

    def _fresh_bundle(self) -> rsa.RsaKeyBundle:
        # distinct moduli per bundle so per-user server keys really differ
        while True:
            bundle = rsa.generate_keypair_random(self.config.prime_bits, self.rng)
            if bundle.n not in self._used_moduli:
                self._used_moduli.add(bundle.n)
                return bundle

    def _secret_key(self, record: UserRecord) -> bytes:
        return derive_secret_key(record.uid, record.pin)

    def _build_private_card(self, record: UserRecord) -> PrivateCard:
        return PrivateCard(
            user_id=record.uid,
            user_mobile_number=record.mobile,
            user_email=record.email,
            outh_code=self.expected_outh(record),
            pin_code=record.pin,
            s_key=self._secret_key(record),
            server_pub=record.server_keys.public,
            pr_key=record.user_keys.private,
            pub_key=record.user_keys.public,
        )

    def _reg_blob(self, record: UserRecord) -> bytes:
        """Registration credentials: uid and PIN encrypted with the per-user
        server private key (readable with the SMS'd public key: authenticity,
        not confidentiality; kept as designed and documented as a gap)."""
        return rsa.encrypt_bytes(
            frame_texts([record.uid, record.pin]), record.server_keys.private
        )

    def _reg_envelopes(self, record: UserRecord, now: int) -> tuple[Envelope, Envelope]:
        email_env = Envelope(
            EMAIL, "reg-email", SERVER_ENDPOINT, record.email,
            frame_fields([str(now).encode(), record.stored_reg_message]), now,
        )
        sms_env = Envelope(
            SMS, "reg-sms", SERVER_ENDPOINT, record.mobile,
            frame_texts([str(now), record.server_keys.public.to_text()]), now,
        )
        return email_env, sms_env

    def _rejection_envelope(self, env: Envelope, exc: AuthRejected, now: int) -> Envelope:
        """Rejections go to the user's registered email when the uid is known,
        otherwise straight back over the network to the requesting endpoint."""
        uid = getattr(exc, "uid", "")
        payload = frame_texts([str(now), exc.reason, exc.detail])
        rec = self.registry.get(uid)
        if rec is not None:
            return Envelope(EMAIL, "rejection", SERVER_ENDPOINT, rec.email, payload, now)
        return Envelope(NETWORK, "rejection", SERVER_ENDPOINT, env.sender, payload, now)

    # ---------------- registration ----------------

    def register_begin(
        self, email: str, mobile: str, name: str, now: int
    ) -> tuple[str, Envelope, Envelope]:
        """Registration intake: allocate uid and PIN, generate both keypairs,
        emit the credentials email and the public-key SMS."""
        if "@" not in email or " " in email or len(email) < 3:
            _reject("invalid-contact", f"bad email {email!r}")
        if not mobile.isdigit():
            _reject("invalid-contact", f"bad mobile {mobile!r}")
        if not name:
            _reject("invalid-contact", "empty name")
        for rec in self.registry.values():
            if rec.email == email:
                _reject("duplicate-email", email)
        uid = f"user{self._next_user}"
        self._next_user += 1
        pin = generate_pin(self.rng)
        user_keys = self._fresh_bundle()
        server_keys = self._fresh_bundle()
        record = UserRecord(
            uid=uid, email=email, mobile=mobile, name=name, pin=pin,
            user_keys=user_keys, server_keys=server_keys, stored_reg_message=b"",
            public_card=PublicCard(uid, name, mobile, email, user_keys.public),
        )
        record.stored_reg_message = self._reg_blob(record)
        self.registry[uid] = record
        self.fail_counts[uid] = 0
        email_env, sms_env = self._reg_envelopes(record, now)
        return uid, email_env, sms_env

    def _handle_reg_auth(self, env: Envelope, now: int) -> list[Envelope]:
        """Registration completion: verify the sealed auth message, issue the
        encrypted private card.

        Failure sends a rejection email and performs no state change.
        """
        try:
            uid_b, sealed = parse_frame(env.payload, expect=2)
            uid = uid_b.decode("utf-8")
        except (CardauthError, UnicodeDecodeError) as exc:
            _reject("malformed-payload", str(exc))
        self._require_not_blacklisted(uid)
        record = self._record(uid)
        k = self._secret_key(record)
        try:
            verify_auth_message(sealed, k, now, self.config.window, self.expected_outh(record))
        except AuthRejected as exc:
            _reject(exc.reason, exc.detail, uid=uid)
        self._checks |= {"digest", "freshness", "outh"}
        card_blob = encrypt_private_card(self._build_private_card(record), k)
        return [
            Envelope(
                EMAIL, "private-card", SERVER_ENDPOINT, record.email,
                frame_fields([str(now).encode(), card_blob]), now,
            )
        ]

    # ---------------- login ----------------

    def login_precheck(self, uid: str, now: int) -> Envelope | None:
        """Blacklist gate, before any crypto. Returns the rejection email for
        a blacklisted user, None when clear to proceed."""
        if uid not in self.registry:
            _reject("unknown-uid", uid)
        if uid in self.blacklist:
            rec = self.registry[uid]
            return Envelope(
                EMAIL, "rejection", SERVER_ENDPOINT, rec.email,
                frame_texts([str(now), "blacklisted-user", uid]), now,
            )
        return None

    def _fail(self, uid: str, origin: str, now: int, reason: str, detail: str = ""):
        """Record a login-condition failure, then raise; at the third strike
        the block email and activation SMS ride along as followups."""
        followups = self.record_failure_and_block(uid, origin, now)
        _reject(reason, detail, uid=uid, followups=followups)

    def record_failure_and_block(self, uid: str, origin: str, now: int) -> list[Envelope]:
        """Bump the failure counter; on the third consecutive failure,
        blacklist the account, email a device notice and SMS an activation
        code. Returns the envelopes to deliver (empty below the threshold)."""
        record = self.registry[uid]
        count = self.fail_counts.get(uid, 0) + 1
        self.fail_counts[uid] = count
        if count < self.config.max_failures or uid in self.blacklist:
            return []
        self.blacklist.add(uid)
        code = self._gen_digits(6)
        self.activation_codes[uid] = (code, now + self.config.activation_ttl_ms)
        notice = Envelope(
            EMAIL, "block-notice", SERVER_ENDPOINT, record.email,
            frame_texts(
                [str(now), f"device-{origin}", f"sim://{origin}", str(now), "SimNet ISP"]
            ),
            now,
        )
        sms = Envelope(
            SMS, "activation-sms", SERVER_ENDPOINT, record.mobile,
            frame_texts([str(now), code]), now,
        )
        return [notice, sms]

    def _handle_login_auth(self, env: Envelope, now: int) -> list[Envelope]:
        """Login challenge: decrypt with the per-user server private key, check
        freshness, digest and auth code, then issue the OTP via SMS."""
        try:
            uid_b, blob = parse_frame(env.payload, expect=2)
            uid = uid_b.decode("utf-8")
        except (CardauthError, UnicodeDecodeError) as exc:
            _reject("malformed-payload", str(exc))
        self._require_not_blacklisted(uid)
        record = self._record(uid)
        try:
            plain = rsa.decrypt_bytes(blob, record.server_keys.private)
        except CardauthError as exc:
            self._fail(uid, env.sender, now, "malformed-payload", str(exc))
        try:
            m = verify_auth_frame(plain, now, self.config.window, self.expected_outh(record))
        except AuthRejected as exc:
            self._fail(uid, env.sender, now, exc.reason, exc.detail)
        if m.uid != uid:
            self._fail(uid, env.sender, now, "wrong-outh-code", "uid mismatch inside message")
        self._checks |= {"digest", "freshness", "outh"}
        otp = self._gen_digits(6)
        self.otp_store[uid] = (otp, now + self.config.otp_ttl_ms)
        return [
            Envelope(
                SMS, "otp-sms", SERVER_ENDPOINT, record.mobile,
                frame_texts([str(now), otp]), now,
            )
        ]

    def _handle_otp_submit(self, env: Envelope, now: int) -> list[Envelope]:
        """Single-use OTP check; the stored code is consumed on first check,
        match or not."""
        t1_s, uid, code = _texts(parse_frame(env.payload), 3)
        self._require_not_blacklisted(uid)
        record = self._record(uid)
        self._check_fresh(_int(t1_s, "t1"), now, uid=uid)
        entry = self.otp_store.pop(uid, None)
        if entry is None:
            self._fail(uid, env.sender, now, "wrong-otp", "no code pending")
        otp, expiry = entry
        if now > expiry:
            self._fail(uid, env.sender, now, "otp-expired")
        if code != otp:
            self._fail(uid, env.sender, now, "wrong-otp")
        self._checks.add("otp")
        self.fail_counts[uid] = 0
        return [
            Envelope(
                NETWORK, "login-ok", SERVER_ENDPOINT, env.sender,
                frame_texts([str(now), uid]), now,
            )
        ]

    # ---------------- account activation ----------------

    def activate_account(self, uid: str, code: str, now: int) -> None:
        """Unblock a three-strikes account with the SMS'd code (single-use)."""
        if uid not in self.registry:
            _reject("unknown-uid", uid)
        entry = self.activation_codes.get(uid)
        if entry is None:
            _reject("wrong-activation-code", "no code pending", uid=uid)
        stored, expiry = entry
        if now > expiry:
            self.activation_codes.pop(uid, None)
            _reject("activation-expired", uid=uid)
        if code != stored:
            _reject("wrong-activation-code", uid=uid)
        self.activation_codes.pop(uid, None)
        self.blacklist.discard(uid)
        self.fail_counts[uid] = 0

    def _handle_activate(self, env: Envelope, now: int) -> list[Envelope]:
        t1_s, uid, code = _texts(parse_frame(env.payload), 3)
        record = self._record(uid)
        self._check_fresh(_int(t1_s, "t1"), now, uid=uid)
        self.activate_account(uid, code, now)
        self._checks.add("activation")
        return [
            Envelope(
                EMAIL, "activation-ok", SERVER_ENDPOINT, record.email,
                frame_texts([str(now), uid]), now,
            )
        ]

    # ---------------- public-card distribution ----------------

    def distribute_public_card(
        self, sender_uid: str, sender_outh: int, recipient_uid: str, now: int
    ) -> Envelope:
        """Check the sender's auth code, then email the sender's public card
        to the recipient."""
        record = self._record(sender_uid)
        if sender_outh != self.expected_outh(record):
            _reject("wrong-outh-code", sender_uid, uid=sender_uid)
        self._checks.add("outh")
        recipient = self.registry.get(recipient_uid)
        if recipient is None:
            _reject("unknown-recipient", recipient_uid, uid=sender_uid)
        return Envelope(
            EMAIL, "public-card", SERVER_ENDPOINT, recipient.email,
            frame_texts([str(now), serialize_card(record.public_card)]), now,
        )

    def _decrypt_request(self, env: Envelope, expect_fields: int, now: int) -> tuple[UserRecord, list[str]]:
        """Common shape of the dashboard requests: clear uid plus an RSA blob
        under the per-user server public key, with t1 as the first field."""
        try:
            uid_b, blob = parse_frame(env.payload, expect=2)
            uid = uid_b.decode("utf-8")
        except (CardauthError, UnicodeDecodeError) as exc:
            _reject("malformed-payload", str(exc))
        record = self._record(uid)
        try:
            plain = rsa.decrypt_bytes(blob, record.server_keys.private)
            fields = _texts(parse_frame(plain), expect_fields)
        except (CardauthError, ValueError) as exc:
            _reject("malformed-payload", str(exc), uid=uid)
        self._check_fresh(_int(fields[0], "t1"), now, uid=uid)
        return record, fields

    def _handle_card_request(self, env: Envelope, now: int) -> list[Envelope]:
        record, (t1_s, uid2, outh_s, recipient_uid) = self._decrypt_request(env, 4, now)
        if uid2 != record.uid:
            _reject("malformed-payload", "uid mismatch inside request", uid=record.uid)
        return [self.distribute_public_card(record.uid, _int(outh_s, "outh"), recipient_uid, now)]

    # ---------------- secret-information requests ----------------

    def request_server_pubkey(self, uid: str, now: int) -> Envelope:
        """SMS the per-user server public key to the registered mobile."""
        record = self._record(uid)
        return Envelope(
            SMS, "pubkey-sms", SERVER_ENDPOINT, record.mobile,
            frame_texts([str(now), record.server_keys.public.to_text()]), now,
        )

    def _handle_pubkey_request(self, env: Envelope, now: int) -> list[Envelope]:
        t1_s, uid = _texts(parse_frame(env.payload), 2)
        self._record(uid)
        self._check_fresh(_int(t1_s, "t1"), now, uid=uid)
        return [self.request_server_pubkey(uid, now)]

    def resend_pin(self, uid: str, now: int) -> Envelope:
        """Resend the stored registration credentials blob, byte for byte."""
        record = self._record(uid)
        return Envelope(
            EMAIL, "reg-email", SERVER_ENDPOINT, record.email,
            frame_fields([str(now).encode(), record.stored_reg_message]), now,
        )

    def _handle_pin_resend(self, env: Envelope, now: int) -> list[Envelope]:
        t1_s, uid = _texts(parse_frame(env.payload), 2)
        self._record(uid)
        self._check_fresh(_int(t1_s, "t1"), now, uid=uid)
        return [self.resend_pin(uid, now)]

    def change_pin(self, uid: str, outh: int, now: int) -> Envelope:
        """Issue a new PIN: new auth code, new secret key, card re-encrypted
        under the NEW key (the old key can no longer open it)."""
        self._require_not_blacklisted(uid)
        record = self._record(uid)
        if outh != self.expected_outh(record):
            _reject("wrong-outh-code", uid, uid=uid)
        self._checks.add("outh")
        record.pin = generate_pin(self.rng)
        record.stored_reg_message = self._reg_blob(record)
        new_k = self._secret_key(record)
        card_blob = encrypt_private_card(self._build_private_card(record), new_k)
        return Envelope(
            EMAIL, "pin-change-email", SERVER_ENDPOINT, record.email,
            frame_fields([str(now).encode(), record.stored_reg_message, card_blob]), now,
        )

    def _handle_pin_change(self, env: Envelope, now: int) -> list[Envelope]:
        record, (t1_s, outh_s) = self._decrypt_request(env, 2, now)
        return [self.change_pin(record.uid, _int(outh_s, "outh"), now)]

    def resend_private_card(self, uid: str, pin: str, origin: str, now: int) -> Envelope:
        """Re-encrypt and email the private card after a PIN check; a wrong
        PIN counts as a strike toward lockout."""
        self._require_not_blacklisted(uid)
        record = self._record(uid)
        if pin != record.pin:
            self._fail(uid, origin, now, "wrong-pin")
        self._checks.add("pin")
        k = self._secret_key(record)
        card_blob = encrypt_private_card(self._build_private_card(record), k)
        return Envelope(
            EMAIL, "private-card", SERVER_ENDPOINT, record.email,
            frame_fields([str(now).encode(), card_blob]), now,
        )

    def _handle_card_resend(self, env: Envelope, now: int) -> list[Envelope]:
        record, (t1_s, pin) = self._decrypt_request(env, 2, now)
        return [self.resend_private_card(record.uid, pin, env.sender, now)]

    def change_contact(
        self, uid: str, outh: int, new_email: str, new_mobile: str, now: int
    ) -> tuple[Envelope, Envelope]:
        """Re-register the same uid against new contact details: fresh PIN,
        fresh user and server keypairs, then the usual credentials email and
        public-key SMS to the new endpoints."""
        self._require_not_blacklisted(uid)
        record = self._record(uid)
        if outh != self.expected_outh(record):
            _reject("wrong-outh-code", uid, uid=uid)
        self._checks.add("outh")
        if "@" not in new_email or " " in new_email or len(new_email) < 3:
            _reject("invalid-contact", f"bad email {new_email!r}", uid=uid)
        if not new_mobile.isdigit():
            _reject("invalid-contact", f"bad mobile {new_mobile!r}", uid=uid)
        for other in self.registry.values():
            if other.uid != uid and other.email == new_email:
                _reject("duplicate-email", new_email, uid=uid)
        record.email = new_email
        record.mobile = new_mobile
        record.pin = generate_pin(self.rng)
        record.user_keys = self._fresh_bundle()
        record.server_keys = self._fresh_bundle()
        record.stored_reg_message = self._reg_blob(record)
        record.public_card = PublicCard(
            uid, record.name, new_mobile, new_email, record.user_keys.public
        )
        return self._reg_envelopes(record, now)

    def _handle_change_contact(self, env: Envelope, now: int) -> list[Envelope]:
        record, (t1_s, outh_s, new_email, new_mobile) = self._decrypt_request(env, 4, now)
        return list(self.change_contact(record.uid, _int(outh_s, "outh"), new_email, new_mobile, now))

    # ---------------- dispatch ----------------

    def handle(self, env: Envelope, now: int) -> list[Envelope]:
        """Handle one delivered envelope; returns the envelopes to send.

        Exactly one audit record is appended per call. AuthRejected from any
        handler turns into a rejection envelope (email when the uid is known,
        network reply otherwise) plus any lockout followups.
        """
        self._checks = set()
        self._uid = ""
        handler = self._handlers.get(env.msg_type)
        try:
            try:
                if handler is None:
                    _reject("malformed-payload", f"unknown message type {env.msg_type}")
                out = handler(env, now)
            except AuthRejected:
                raise
            except (CardauthError, IndexError, ValueError, UnicodeDecodeError) as exc:
                # tampered payloads can fail structurally anywhere; normalize
                _reject("malformed-payload", str(exc), uid=self._uid)
        except AuthRejected as exc:
            uid = getattr(exc, "uid", "") or self._uid
            self.audit.append(
                AuditRecord(env.msg_type, uid, False, exc.reason, frozenset(self._checks))
            )
            return [self._rejection_envelope(env, exc, now)] + list(
                getattr(exc, "followups", []) or []
            )
        self.audit.append(
            AuditRecord(env.msg_type, self._uid, True, None, frozenset(self._checks))
        )
        return out


class ClientActor:
    """One user's device: credentials in memory, encrypted card on disk
    (figuratively), saved public cards, and the inboxes."""

    def __init__(self, endpoint: str, email: str, mobile: str, name: str,
                 window: FreshnessWindow | None = None):
        self.endpoint = endpoint
        self.email = email
        self.mobile = mobile
        self.name = name
        self.window = window or FreshnessWindow()
        self.uid: str | None = None
        self.pin: str | None = None
        self.server_pub: rsa.RsaPublicKey | None = None
        self.card_blob: bytes | None = None
        self.saved_cards: dict[str, PublicCard] = {}
        self.session = False
        self.inbox: list[Envelope] = []
        self.last_otp: str | None = None
        self.last_activation_code: str | None = None
        self.last_rejection: tuple[str, str] | None = None
        self.audit: list[AuditRecord] = []
        self._pending_reg_blob: bytes | None = None
        self._consumed_msgs: set[int] = set()

    # ---------------- delivery handling ----------------

    def handle(self, env: Envelope, now: int) -> list[Envelope]:
        """Consume an email/SMS/network delivery. Never replies on its own;
        explicit operations (receive_user_message etc.) drive responses."""
        self.inbox.append(env)
        fields = []
        try:
            fields = parse_frame(env.payload)
        except CardauthError:
            self.audit.append(
                AuditRecord(env.msg_type, self.uid or "", False, "malformed-payload", frozenset())
            )
            return []
        layout = MESSAGE_TYPES.get(env.msg_type, ())
        checks = set()
        if layout and layout[0] == "t1" and fields:
            try:
                t1 = int(fields[0])
            except ValueError:
                t1 = -1
            if not verify_freshness(t1, now, self.window):
                self.audit.append(
                    AuditRecord(env.msg_type, self.uid or "", False, "stale-timestamp", frozenset())
                )
                return []
            checks.add("freshness")
        try:
            self._consume(env, fields)
        except (CardauthError, IndexError, ValueError, UnicodeDecodeError):
            self.audit.append(
                AuditRecord(env.msg_type, self.uid or "", False, "malformed-payload", frozenset())
            )
            return []
        self.audit.append(
            AuditRecord(env.msg_type, self.uid or "", True, None, frozenset(checks))
        )
        return []

    def _consume(self, env: Envelope, fields: list[bytes]):
        mt = env.msg_type
        if mt == "reg-email":
            self._pending_reg_blob = fields[1]
            self._try_extract_credentials()
        elif mt == "reg-sms" or mt == "pubkey-sms":
            self.server_pub = rsa.public_key_from_text(fields[1].decode())
            self._try_extract_credentials()
        elif mt == "private-card":
            self.card_blob = fields[1]
        elif mt == "otp-sms":
            self.last_otp = fields[1].decode()
        elif mt == "login-ok":
            self.session = True
        elif mt == "rejection":
            self.last_rejection = (fields[1].decode(), fields[2].decode())
        elif mt == "activation-sms":
            self.last_activation_code = fields[1].decode()
        elif mt == "public-card":
            card = parse_card(fields[1].decode())
            if isinstance(card, PublicCard):
                self.saved_cards[card.user_id] = card
        elif mt == "pin-change-email":
            self._pending_reg_blob = fields[1]
            self.card_blob = fields[2]
            self._try_extract_credentials()
        # user-msg, block-notice, activation-ok: inboxed, no state change

    def _try_extract_credentials(self):
        if self._pending_reg_blob is None or self.server_pub is None:
            return
        try:
            plain = rsa.decrypt_bytes(self._pending_reg_blob, self.server_pub)
            uid_b, pin_b = parse_frame(plain, expect=2)
        except CardauthError:
            return
        self.uid = uid_b.decode()
        self.pin = pin_b.decode()
        self._pending_reg_blob = None

    # ---------------- client-side operations ----------------

    def _own_outh(self, uid: str, pin: str) -> int:
        """Auth code from the decrypted card when the entered PIN opens it,
        otherwise recomputed from the entered credentials (a wrong PIN then
        yields a wrong code, which the server counts as a strike)."""
        if self.card_blob is not None:
            try:
                return decrypt_private_card(self.card_blob, derive_secret_key(uid, pin)).outh_code
            except CardauthError:
                pass
        return compute_outh_code(uid, pin, self.email, self.mobile)

    def register_complete_envelope(self, now: int) -> Envelope:
        """Finish registration: compute auth code and K, seal the auth message."""
        if self.uid is None or self.pin is None:
            raise CardauthError("registration credentials not received yet")
        outh = compute_outh_code(self.uid, self.pin, self.email, self.mobile)
        k = derive_secret_key(self.uid, self.pin)
        sealed = seal_auth_message(build_auth_message(self.uid, outh, now), k)
        return Envelope(
            NETWORK, "reg-auth", self.endpoint, SERVER_ENDPOINT,
            frame_fields([self.uid.encode(), sealed]), now,
        )

    def build_login_auth(self, uid: str, pin: str, now: int) -> Envelope:
        """Login credentials: auth message encrypted with the per-user server
        public key."""
        if self.server_pub is None:
            raise CardauthError("server public key unknown")
        m = build_auth_message(uid, self._own_outh(uid, pin), now)
        blob = rsa.encrypt_bytes(encode_auth_message(m), self.server_pub)
        return Envelope(
            NETWORK, "login-auth", self.endpoint, SERVER_ENDPOINT,
            frame_fields([uid.encode(), blob]), now,
        )

    def build_otp_submit(self, uid: str, code: str, now: int) -> Envelope:
        return Envelope(
            NETWORK, "otp-submit", self.endpoint, SERVER_ENDPOINT,
            frame_texts([str(now), uid, code]), now,
        )

    def build_activate(self, uid: str, code: str, now: int) -> Envelope:
        return Envelope(
            NETWORK, "activate-request", self.endpoint, SERVER_ENDPOINT,
            frame_texts([str(now), uid, code]), now,
        )

    def _encrypted_request(self, msg_type: str, fields: list[str], now: int) -> Envelope:
        if self.uid is None or self.server_pub is None:
            raise CardauthError("not registered")
        blob = rsa.encrypt_bytes(frame_texts(fields), self.server_pub)
        return Envelope(
            NETWORK, msg_type, self.endpoint, SERVER_ENDPOINT,
            frame_fields([self.uid.encode(), blob]), now,
        )

    def card_request_envelope(self, recipient_uid: str, now: int) -> Envelope:
        outh = compute_outh_code(self.uid, self.pin, self.email, self.mobile)
        return self._encrypted_request(
            "card-request", [str(now), self.uid, str(outh), recipient_uid], now
        )

    def pubkey_request_envelope(self, now: int) -> Envelope:
        return Envelope(
            NETWORK, "pubkey-request", self.endpoint, SERVER_ENDPOINT,
            frame_texts([str(now), self.uid or ""]), now,
        )

    def pin_resend_envelope(self, now: int) -> Envelope:
        return Envelope(
            NETWORK, "pin-resend-request", self.endpoint, SERVER_ENDPOINT,
            frame_texts([str(now), self.uid or ""]), now,
        )

    def pin_change_envelope(self, now: int) -> Envelope:
        outh = compute_outh_code(self.uid, self.pin, self.email, self.mobile)
        return self._encrypted_request("pin-change-request", [str(now), str(outh)], now)

    def card_resend_envelope(self, pin: str, now: int) -> Envelope:
        return self._encrypted_request("card-resend-request", [str(now), pin], now)

    def change_contact_envelope(self, new_email: str, new_mobile: str, now: int) -> Envelope:
        outh = compute_outh_code(self.uid, self.pin, self.email, self.mobile)
        return self._encrypted_request(
            "change-contact-request", [str(now), str(outh), new_email, new_mobile], now
        )

    def view_private_card(self) -> PrivateCard:
        """Decrypt the stored card with the key derived from uid and PIN."""
        if self.card_blob is None:
            raise CardauthError("no private card on file")
        return decrypt_private_card(self.card_blob, derive_secret_key(self.uid, self.pin))

    # ---------------- user-to-user messaging ----------------

    def send_user_message(self, recipient_card: PublicCard, msg: bytes, now: int) -> Envelope:
        """Encrypt under the per-correspondent key and append the two-layer
        signature; goes straight to the recipient's email, no server."""
        card = self.view_private_card()
        kprime = derive_message_key(recipient_card.user_id, card.s_key)
        cmsg = rc4pr_apply(kprime, msg)
        auth_dtl = sign_message(
            self.uid, msg, kprime, now, card.pr_key, recipient_card.pub_key
        )
        return Envelope(
            EMAIL, "user-msg", self.email, recipient_card.user_email,
            frame_fields([cmsg, auth_dtl]), now,
        )

    def receive_user_message(self, env: Envelope, sender_card: PublicCard, now: int) -> bytes:
        """Open the signature, recover K', decrypt, compare digests, check
        the extracted timestamp. Raises AuthRejected on any failure."""
        try:
            cmsg, auth_dtl = parse_frame(env.payload, expect=2)
        except CardauthError as exc:
            self._audit_msg(False, "malformed-payload")
            raise AuthRejected("malformed-payload", str(exc)) from exc
        card = self.view_private_card()
        try:
            sig = open_signature(auth_dtl, card.pr_key, sender_card.pub_key)
        except UnreadableSignature as exc:
            self._audit_msg(False, exc.reason)
            raise
        if sig.sender_uid != sender_card.user_id:
            self._audit_msg(False, "unreadable-signature")
            raise UnreadableSignature("inner", "sender id mismatch")
        if not verify_freshness(sig.t1, now, self.window):
            self._audit_msg(False, "stale-timestamp")
            raise AuthRejected("stale-timestamp", f"delta={now - sig.t1}ms")
        msg = rc4pr_apply(sig.message_key, cmsg)
        if hash_h(msg) != sig.msg_digest:
            self._audit_msg(False, "digest-mismatch")
            raise AuthRejected("digest-mismatch")
        self._audit_msg(True, None)
        return msg

    def _audit_msg(self, accepted: bool, reason: str | None):
        checks = frozenset({"signature", "freshness", "digest"}) if accepted else frozenset()
        self.audit.append(AuditRecord("user-msg", self.uid or "", accepted, reason, checks))

    def rejection_notice(self, to_email: str, exc: AuthRejected, now: int) -> Envelope:
        """Failure notice back to a message's sender, per the receive flow."""
        return Envelope(
            EMAIL, "rejection", self.email, to_email,
            frame_texts([str(now), exc.reason, exc.detail]), now,
        )

    def latest_unconsumed_user_msg(self) -> Envelope | None:
        for idx in range(len(self.inbox) - 1, -1, -1):
            if self.inbox[idx].msg_type == "user-msg" and idx not in self._consumed_msgs:
                self._consumed_msgs.add(idx)
                return self.inbox[idx]
        return None


# ---------------- orchestrated flows ----------------


@dataclass
class FlowResult:
    ok: bool
    reason: str | None = None
    detail: str = ""
    value: object = None

    @property
    def outcome(self) -> str:
        return "ok" if self.ok else (self.reason or "error")


def register_user(net, server: AuthServer, client: ClientActor) -> FlowResult:
    """Full registration round trip; leaves the client holding its card."""
    try:
        uid, email_env, sms_env = server.register_begin(
            client.email, client.mobile, client.name, net.clock.now
        )
    except AuthRejected as exc:
        return FlowResult(False, exc.reason, exc.detail)
    net.deliver(email_env)
    net.deliver(sms_env)
    net.deliver(client.register_complete_envelope(net.clock.now))
    rec = server.audit[-1]
    if not rec.accepted:
        return FlowResult(False, rec.reason)
    if client.card_blob is None:
        return FlowResult(False, "malformed-payload", "card never arrived")
    return FlowResult(True, value=uid)


def login(net, server: AuthServer, client: ClientActor, uid: str, pin: str,
          otp: str = "auto") -> FlowResult:
    """The whole login dance, auto-submitting the SMS'd OTP unless overridden."""
    try:
        rejection = server.login_precheck(uid, net.clock.now)
    except AuthRejected as exc:
        return FlowResult(False, exc.reason, exc.detail)
    if rejection is not None:
        net.deliver(rejection)
        return FlowResult(False, "blacklisted-user")
    net.deliver(client.build_login_auth(uid, pin, net.clock.now))
    rec = server.audit[-1]
    if not rec.accepted:
        return FlowResult(False, rec.reason)
    code = client.last_otp if otp == "auto" else otp
    net.deliver(client.build_otp_submit(uid, code or "", net.clock.now))
    rec = server.audit[-1]
    if not rec.accepted:
        return FlowResult(False, rec.reason)
    return FlowResult(True, value=uid)


def exchange_public_card(net, server: AuthServer, sender: ClientActor,
                         recipient_uid: str) -> FlowResult:
    """Sender asks the server to mail their public card to the recipient."""
    net.deliver(sender.card_request_envelope(recipient_uid, net.clock.now))
    rec = server.audit[-1]
    return FlowResult(rec.accepted, rec.reason)


def send_message(net, sender: ClientActor, recipient_uid: str, msg: bytes) -> FlowResult:
    """Encrypt-and-sign straight to the recipient's email inbox."""
    card = sender.saved_cards.get(recipient_uid)
    if card is None:
        return FlowResult(False, "unknown-recipient", f"no public card for {recipient_uid}")
    env = sender.send_user_message(card, msg, net.clock.now)
    net.deliver(env)
    return FlowResult(True, value=env)


def receive_latest_message(net, recipient: ClientActor) -> FlowResult:
    """Verify the newest unconsumed user message; on failure the sender gets
    a rejection notice."""
    env = recipient.latest_unconsumed_user_msg()
    if env is None:
        return FlowResult(False, "no-message")
    sender_card = next(
        (c for c in recipient.saved_cards.values() if c.user_email == env.sender), None
    )
    if sender_card is None:
        return FlowResult(False, "unknown-sender", env.sender)
    try:
        msg = recipient.receive_user_message(env, sender_card, net.clock.now)
    except AuthRejected as exc:
        net.deliver(recipient.rejection_notice(sender_card.user_email, exc, net.clock.now))
        return FlowResult(False, exc.reason, exc.detail)
    return FlowResult(True, value=msg)


def _simple_request(net, server: AuthServer, env: Envelope) -> FlowResult:
    net.deliver(env)
    rec = server.audit[-1]
    return FlowResult(rec.accepted, rec.reason)


def request_pubkey(net, server, client) -> FlowResult:
    return _simple_request(net, server, client.pubkey_request_envelope(net.clock.now))


def resend_pin_flow(net, server, client) -> FlowResult:
    return _simple_request(net, server, client.pin_resend_envelope(net.clock.now))


def change_pin_flow(net, server, client) -> FlowResult:
    return _simple_request(net, server, client.pin_change_envelope(net.clock.now))


def resend_card_flow(net, server, client, pin: str) -> FlowResult:
    return _simple_request(net, server, client.card_resend_envelope(pin, net.clock.now))


def change_contact_flow(net, server: AuthServer, client: ClientActor,
                        new_email: str, new_mobile: str) -> FlowResult:
    """Contact change plus the re-registration round trip it triggers."""
    net.register(EMAIL, new_email, client.handle)
    net.register(SMS, new_mobile, client.handle)
    result = _simple_request(
        net, server, client.change_contact_envelope(new_email, new_mobile, net.clock.now)
    )
    if not result.ok:
        return result
    client.email = new_email
    client.mobile = new_mobile
    net.deliver(client.register_complete_envelope(net.clock.now))
    rec = server.audit[-1]
    if not rec.accepted:
        return FlowResult(False, rec.reason)
    return FlowResult(True)


# ---------------- confidentiality scanner ----------------


def scan_confidentiality(entries, server: AuthServer) -> list[str]:
    """Scan every logged payload for secret material in the clear.

    Needles per user: the PIN (UTF-8), K, K' toward every other user, and
    both private exponents (decimal text and raw big-endian bytes). Also
    flags private-card field labels on the public-card distribution path.
    """
    needles: list[tuple[bytes, str]] = []
    records = list(server.registry.values())
    for rec in records:
        needles.append((rec.pin.encode(), f"{rec.uid} PIN"))
        k = derive_secret_key(rec.uid, rec.pin)
        needles.append((k, f"{rec.uid} K"))
        for other in records:
            if other.uid != rec.uid:
                needles.append(
                    (derive_message_key(other.uid, k), f"{rec.uid}->{other.uid} K'")
                )
        for d, label in (
            (rec.user_keys.d, "user private exponent"),
            (rec.server_keys.d, "server private exponent"),
        ):
            needles.append((str(d).encode(), f"{rec.uid} {label} (decimal)"))
            raw = d.to_bytes((d.bit_length() + 7) // 8, "big")
            if len(raw) >= 3:
                needles.append((raw, f"{rec.uid} {label} (bytes)"))
    findings = []
    private_markers = (b"pin_code", b"S_Key", b"private_key", b"server_pub_key")
    for entry in entries:
        for needle, label in needles:
            if needle and needle in entry.payload:
                findings.append(f"seq {entry.seq} {entry.msg_type}: contains {label}")
        if entry.msg_type == "public-card" and any(
            m in entry.payload for m in private_markers
        ):
            findings.append(f"seq {entry.seq}: private-card material on public-card path")
    return findings
