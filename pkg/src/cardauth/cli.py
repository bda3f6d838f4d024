"""Command-line front end: cipher tool, benchmark report, key generation,
scenario runner, and an interactive client console.

Exit codes: 0 success, 1 runtime/protocol failure, 2 usage error. Every
command is deterministic for a given --seed (wall-clock timings in bench
output excepted; they never affect the exit status). CARDAUTH_SEED sets the
default seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import protocol, rsa, simnet
from .errors import CardauthError, ScenarioError
from .framing import parse_frame
from .rc4pr import rc4pr_apply_counted
from .cards import serialize_card

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def _default_seed() -> int:
    try:
        return int(os.environ.get("CARDAUTH_SEED", "0"))
    except ValueError:
        return 0


def _parse_key_hex(text: str) -> bytes:
    try:
        key = bytes.fromhex(text)
    except ValueError as exc:
        raise CardauthError(f"key is not hex: {exc}") from exc
    if len(key) != 16:
        raise CardauthError(f"key must be 32 hex chars (16 bytes), got {len(key)} bytes")
    return key


# ---------------- rc4pr ----------------


def cmd_rc4pr(args) -> int:
    try:
        key = _parse_key_hex(args.key)
    except CardauthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    try:
        with open(args.infile, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        print(f"error: cannot read {args.infile}: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    out, subkeys = rc4pr_apply_counted(key, data)
    try:
        with open(args.outfile, "wb") as fh:
            fh.write(out)
    except OSError as exc:
        print(f"error: cannot write {args.outfile}: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    if args.verbose:
        print(f"subkeys: {subkeys}")
    return 0


# ---------------- bench ----------------


def cmd_bench(args) -> int:
    try:
        key = _parse_key_hex(args.key)
    except CardauthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    rows = []
    failed = False
    for path in args.files:
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            rows.append({"path": path, "ok": False, "error": str(exc)})
            failed = True
            continue
        t0 = time.perf_counter()
        _, subkeys = rc4pr_apply_counted(key, data)
        duration_ms = (time.perf_counter() - t0) * 1000.0
        rows.append(
            {
                "path": path,
                "ok": True,
                "size": len(data),
                "duration_ms": duration_ms,
                "subkeys": subkeys,
                "rate": (len(data) / duration_ms) if duration_ms > 0 else 0.0,
            }
        )
    ok_rows = [r for r in rows if r["ok"]]
    total_size = sum(r["size"] for r in ok_rows)
    total_ms = sum(r["duration_ms"] for r in ok_rows)
    total_subkeys = sum(r["subkeys"] for r in ok_rows)
    total = {
        "size": total_size,
        "duration_ms": total_ms,
        "subkeys": total_subkeys,
        "rate": (total_size / total_ms) if total_ms > 0 else 0.0,
    }
    if args.machine_readable:
        print(json.dumps({"files": rows, "total": total}))
        return RUNTIME_ERROR if failed else 0
    for i, row in enumerate(rows, start=1):
        print(f"=====File # [{i}] =====")
        if not row["ok"]:
            print(f"FAILED: {row['path']}: {row['error']}")
            continue
        print(f"The file size: {row['size']} Bytes")
        print(f"Encryption duration time: {row['duration_ms']} MS")
        print(f"The number of subkeys: {row['subkeys']}")
        print(f"Byte's encryption rate: {row['rate']} Bytes/MS")
    print(f"=====Total Result of encrypt {len(rows)} files=====")
    print(f"The total files size: {total['size']} Bytes")
    print(f"The total Encryption duration time: {total['duration_ms']} MS")
    print(f"The total number of subkeys: {total['subkeys']}")
    print(f"Byte's encryption rate: {total['rate']} Bytes/MS")
    return RUNTIME_ERROR if failed else 0


# ---------------- keygen ----------------


def cmd_keygen(args) -> int:
    try:
        if args.random is not None:
            bundle = rsa.generate_keypair_random(args.random, args.seed)
        else:
            if args.p is None or args.q is None or args.e is None:
                print("error: provide p q e, or --random BITS", file=sys.stderr)
                return USAGE_ERROR
            bundle = rsa.generate_keypair(args.p, args.q, args.e)
    except CardauthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    print(f"public: {bundle.public.to_text()}")
    print(f"private: {bundle.private.to_text()}")
    return 0


# ---------------- scenario ----------------


def cmd_scenario(args) -> int:
    try:
        scenario = simnet.load_scenario(args.path)
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return USAGE_ERROR
    try:
        report = simnet.run_scenario(scenario, seed=args.seed)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    for r in report.results:
        status = "PASS" if r.ok else "FAIL"
        suffix = "" if r.ok else f" (expected {r.expected}, got {r.actual})"
        print(f"{status} line {r.lineno}: {r.raw}{suffix}")
    met = sum(1 for r in report.results if r.ok)
    print(f"scenario: {met}/{len(report.results)} expectations met")
    if args.log:
        print(report.log.export_text(), end="")
    return 0 if report.ok else RUNTIME_ERROR


# ---------------- client console ----------------


class Repl:
    """Interactive client console over an in-process server and simnet.

    Simulated email/SMS deliveries print as they arrive. The clock advances
    one second per command, so transcripts are reproducible per seed.
    """

    def __init__(self, seed: int, out=None):
        self.world = simnet.World(seed)
        self.world.net.on_deliver = self._render_delivery
        self.out = out or sys.stdout
        self.current = None
        self._pending_login = None
        self._client_count = 0

    def _print(self, text=""):
        print(text, file=self.out)

    def _render_delivery(self, entry):
        label = f"  ~ [{entry.channel} -> {entry.recipient}] {entry.msg_type}"
        try:
            fields = parse_frame(entry.payload)
        except CardauthError:
            self._print(f"{label}: {len(entry.payload)} bytes (unframed)")
            return
        detail = ""
        mt = entry.msg_type
        if mt == "reg-email":
            detail = f"encrypted credentials ({len(fields[1])} bytes)"
        elif mt in ("reg-sms", "pubkey-sms"):
            detail = f"server public key {fields[1].decode()}"
        elif mt == "private-card":
            detail = f"encrypted private card ({len(fields[1])} bytes)"
        elif mt == "otp-sms":
            detail = f"OTP {fields[1].decode()}"
        elif mt == "rejection":
            reason = fields[1].decode()
            extra = fields[2].decode()
            detail = f"{reason}" + (f" ({extra})" if extra else "")
        elif mt == "block-notice":
            detail = f"account blocked; attempt from {fields[1].decode()}"
        elif mt == "activation-sms":
            detail = f"activation code {fields[1].decode()}"
        elif mt == "activation-ok":
            detail = f"account {fields[1].decode()} re-activated"
        elif mt == "public-card":
            first = fields[1].decode().splitlines()[0]
            detail = first.replace(" =====> ", "=")
        elif mt == "user-msg":
            detail = f"ciphertext {len(fields[0])} bytes + signature {len(fields[1])} bytes"
        elif mt == "login-ok":
            detail = f"session open for {fields[1].decode()}"
        elif mt == "pin-change-email":
            detail = "new credentials + updated card"
        else:
            detail = f"{len(entry.payload)} bytes"
        self._print(f"{label}: {detail}")

    def _actor_by_uid(self, uid):
        for actor in self.world.actors.values():
            if actor.uid == uid:
                return actor
        return None

    def _need_login(self):
        if self.current is None or not self.current.session:
            self._print("not logged in; use: login <uid> <pin>")
            return True
        return False

    HELP = """commands:
  register <email> <mobile> <name>   create an account (prints uid and PIN)
  login <uid> <pin>                  start login; OTP arrives via SMS
  otp <code>                         submit the OTP for the pending login
  activate <uid> <code>              unblock a locked account
  card view                          show the decrypted private card
  card send <uid>                    mail my public card to another user
  card resend <pin>                  ask the server to resend my private card
  cards list                         list saved public cards
  msg <uid> <text...>                send an encrypted signed message
  recv                               verify my newest incoming message
  pin resend                         recover my PIN via email
  pin change                         get a fresh PIN and re-encrypted card
  contact change <email> <mobile>    re-register with new contact details
  pubkey                             get my server public key via SMS
  quit                               leave"""

    def execute(self, line: str) -> bool:
        """Run one command; returns False when the session should end."""
        parts = line.split()
        verb = parts[0]
        args = parts[1:]
        if verb in ("quit", "exit"):
            return False
        if verb == "help":
            self._print(self.HELP)
        elif verb == "register":
            self._cmd_register(args)
        elif verb == "login":
            self._cmd_login(args)
        elif verb == "otp":
            self._cmd_otp(args)
        elif verb == "activate":
            self._cmd_activate(args)
        elif verb == "card" and args[:1] == ["view"]:
            self._cmd_card_view()
        elif verb == "card" and args[:1] == ["send"]:
            self._cmd_card_send(args[1:])
        elif verb == "card" and args[:1] == ["resend"]:
            self._cmd_card_resend(args[1:])
        elif verb == "cards" and args[:1] == ["list"]:
            self._cmd_cards_list()
        elif verb == "msg":
            self._cmd_msg(args)
        elif verb == "recv":
            self._cmd_recv()
        elif verb == "pin" and args[:1] == ["resend"]:
            self._cmd_pin_resend()
        elif verb == "pin" and args[:1] == ["change"]:
            self._cmd_pin_change()
        elif verb == "contact" and args[:1] == ["change"]:
            self._cmd_contact_change(args[1:])
        elif verb == "pubkey":
            self._cmd_pubkey()
        else:
            self._print(f"unknown command {line!r}; type help")
        return True

    def _cmd_register(self, args):
        if len(args) < 3:
            self._print("usage: register <email> <mobile> <name>")
            return
        email, mobile, name = args[0], args[1], " ".join(args[2:])
        self._client_count += 1
        endpoint = f"client{self._client_count}"
        try:
            actor = self.world.add_client(endpoint, email, mobile, name)
        except ScenarioError as exc:
            self._print(f"error: {exc}")
            return
        result = protocol.register_user(self.world.net, self.world.server, actor)
        if result.ok:
            self._print(f"registered: uid={actor.uid} pin={actor.pin} (memorize the PIN)")
        else:
            self._print(f"registration rejected: {result.reason}")

    def _cmd_login(self, args):
        if len(args) != 2:
            self._print("usage: login <uid> <pin>")
            return
        uid, pin = args
        actor = self._actor_by_uid(uid)
        if actor is None:
            self._print(f"no client here owns {uid}")
            return
        try:
            rejection = self.world.server.login_precheck(uid, self.world.clock.now)
        except CardauthError as exc:
            self._print(f"rejected: {exc}")
            return
        if rejection is not None:
            self.world.net.deliver(rejection)
            self._print("rejected: blacklisted-user (activate with the SMS'd code)")
            return
        self.world.net.deliver(actor.build_login_auth(uid, pin, self.world.clock.now))
        rec = self.world.server.audit[-1]
        if not rec.accepted:
            self._print(f"rejected: {rec.reason}")
            if uid in self.world.server.blacklist:
                self._print("account is now locked; use: activate <uid> <code>")
            return
        self._pending_login = (actor, uid)
        self._print("OTP sent via SMS; submit with: otp <code>")

    def _cmd_otp(self, args):
        if len(args) != 1:
            self._print("usage: otp <code>")
            return
        if self._pending_login is None:
            self._print("no login pending")
            return
        actor, uid = self._pending_login
        self.world.net.deliver(actor.build_otp_submit(uid, args[0], self.world.clock.now))
        rec = self.world.server.audit[-1]
        if rec.accepted:
            self.current = actor
            self._pending_login = None
            self._print(f"login ok - dashboard ready for {uid}")
        else:
            self._print(f"rejected: {rec.reason}")

    def _cmd_activate(self, args):
        if len(args) != 2:
            self._print("usage: activate <uid> <code>")
            return
        uid, code = args
        actor = self._actor_by_uid(uid)
        if actor is None:
            self._print(f"no client here owns {uid}")
            return
        self.world.net.deliver(actor.build_activate(uid, code, self.world.clock.now))
        rec = self.world.server.audit[-1]
        self._print("account re-activated" if rec.accepted else f"rejected: {rec.reason}")

    def _cmd_card_view(self):
        if self._need_login():
            return
        try:
            card = self.current.view_private_card()
        except CardauthError as exc:
            self._print(f"error: {exc}")
            return
        self._print(serialize_card(card).rstrip("\n"))

    def _cmd_card_send(self, args):
        if self._need_login():
            return
        if len(args) != 1:
            self._print("usage: card send <uid>")
            return
        result = protocol.exchange_public_card(
            self.world.net, self.world.server, self.current, args[0]
        )
        self._print("public card sent" if result.ok else f"rejected: {result.reason}")

    def _cmd_card_resend(self, args):
        if self._need_login():
            return
        if len(args) != 1:
            self._print("usage: card resend <pin>")
            return
        result = protocol.resend_card_flow(
            self.world.net, self.world.server, self.current, args[0]
        )
        self._print("private card resent" if result.ok else f"rejected: {result.reason}")

    def _cmd_cards_list(self):
        if self._need_login():
            return
        if not self.current.saved_cards:
            self._print("(no saved public cards)")
            return
        for uid in sorted(self.current.saved_cards):
            c = self.current.saved_cards[uid]
            self._print(
                f"{uid}: {c.user_name} <{c.user_email}> mobile {c.user_mobile_number} "
                f"pub {c.pub_key.to_text()}"
            )

    def _cmd_msg(self, args):
        if self._need_login():
            return
        if len(args) < 2:
            self._print("usage: msg <uid> <text...>")
            return
        result = protocol.send_message(
            self.world.net, self.current, args[0], " ".join(args[1:]).encode()
        )
        self._print("message sent" if result.ok else f"rejected: {result.reason}")

    def _cmd_recv(self):
        if self._need_login():
            return
        result = protocol.receive_latest_message(self.world.net, self.current)
        if result.ok:
            self._print(f"message verified: {result.value.decode(errors='replace')}")
        else:
            self._print(f"rejected: {result.reason}")

    def _cmd_pin_resend(self):
        if self._need_login():
            return
        result = protocol.resend_pin_flow(self.world.net, self.world.server, self.current)
        if result.ok:
            self._print(f"PIN recovered: {self.current.pin}")
        else:
            self._print(f"rejected: {result.reason}")

    def _cmd_pin_change(self):
        if self._need_login():
            return
        result = protocol.change_pin_flow(self.world.net, self.world.server, self.current)
        if result.ok:
            self._print(f"PIN changed; new PIN {self.current.pin}")
        else:
            self._print(f"rejected: {result.reason}")

    def _cmd_contact_change(self, args):
        if self._need_login():
            return
        if len(args) != 2:
            self._print("usage: contact change <email> <mobile>")
            return
        result = protocol.change_contact_flow(
            self.world.net, self.world.server, self.current, args[0], args[1]
        )
        if result.ok:
            self._print(f"contact updated; new PIN {self.current.pin}")
        else:
            self._print(f"rejected: {result.reason}")

    def _cmd_pubkey(self):
        if self._need_login():
            return
        result = protocol.request_pubkey(self.world.net, self.world.server, self.current)
        self._print("server public key sent via SMS" if result.ok
                    else f"rejected: {result.reason}")

    def run(self, stdin) -> int:
        self._print("cardauth client console (simulated server; type help)")
        interactive = hasattr(stdin, "isatty") and stdin.isatty()
        while True:
            if interactive:
                try:
                    line = input("cardauth> ")
                except EOFError:
                    break
            else:
                line = stdin.readline()
                if not line:
                    break
                line = line.rstrip("\n")
                self._print(f"cardauth> {line}")
            if not line.strip():
                continue
            self.world.clock.advance(1000)
            try:
                if not self.execute(line.strip()):
                    break
            except (CardauthError, ScenarioError) as exc:
                self._print(f"error: {exc}")
        self._print("bye")
        return 0


def cmd_repl(args) -> int:
    return Repl(args.seed).run(sys.stdin)


# ---------------- argument parsing ----------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cardauth",
        description="Card-based authentication model tools (simulation only).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rc4pr", help="encrypt/decrypt a file with the block-rekeyed cipher")
    p.add_argument("mode", choices=["encrypt", "decrypt"],
                   help="same transform either way; kept for clarity")
    p.add_argument("--key", required=True, help="32 hex chars (128-bit key)")
    p.add_argument("infile")
    p.add_argument("outfile")
    p.add_argument("--verbose", action="store_true", help="print the subkey count")
    p.set_defaults(fn=cmd_rc4pr)

    p = sub.add_parser("bench", help="encrypt files and print the throughput report")
    p.add_argument("files", nargs="+")
    p.add_argument("--key", default="000102030405060708090a0b0c0d0e0f")
    p.add_argument("--machine-readable", action="store_true", help="emit JSON rows")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("keygen", help="generate an RSA key bundle")
    p.add_argument("p", nargs="?", type=int)
    p.add_argument("q", nargs="?", type=int)
    p.add_argument("e", nargs="?", type=int)
    p.add_argument("--random", type=int, metavar="BITS", help="random primes of BITS bits")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.set_defaults(fn=cmd_keygen)

    p = sub.add_parser("scenario", help="run a scripted scenario and check expectations")
    p.add_argument("path")
    p.add_argument("--seed", type=int, default=None, help="override the script's seed")
    p.add_argument("--log", action="store_true", help="print the event log afterwards")
    p.set_defaults(fn=cmd_scenario)

    p = sub.add_parser("repl", help="interactive client console")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.set_defaults(fn=cmd_repl)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
