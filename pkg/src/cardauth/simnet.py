"""Deterministic simulated transport: clock, channels, event log, adversary.

One logical thread of execution: deliveries are synchronous and in order,
responses are delivered depth-first before the next top-level send. All
randomness is threaded from the scenario seed and all timestamps come from
the SimClock, so a (seed, script) pair always produces a byte-identical
event log.

Scenario files are line-oriented: one action per line, ``verb args... =>
expected-outcome``, with ``#`` comments. See the bundled scenarios for the
vocabulary.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import protocol
from .errors import CardauthError, ScenarioError
from .protocol import (
    EMAIL,
    NETWORK,
    SERVER_ENDPOINT,
    SMS,
    AuthServer,
    ClientActor,
    Envelope,
)


class UnknownEndpointError(CardauthError):
    """Delivery addressed to an endpoint nobody registered."""


@dataclass
class SimClock:
    """The only time source in the simulation; advances monotonically."""

    now_ms: int = 0

    @property
    def now(self) -> int:
        return self.now_ms

    def advance(self, ms: int) -> int:
        if ms < 0:
            raise CardauthError("clock cannot move backwards")
        self.now_ms += ms
        return self.now_ms


@dataclass(frozen=True)
class LogEntry:
    seq: int
    at_ms: int
    tag: str | None
    channel: str
    msg_type: str
    sender: str
    recipient: str
    payload: bytes


class EventLog:
    """Append-only record of every delivery, adversarial or not."""

    def __init__(self):
        self.entries: list[LogEntry] = []

    def append(self, env: Envelope, at_ms: int, tag: str | None) -> LogEntry:
        entry = LogEntry(
            seq=len(self.entries),
            at_ms=at_ms,
            tag=tag,
            channel=env.channel,
            msg_type=env.msg_type,
            sender=env.sender,
            recipient=env.recipient,
            payload=env.payload,
        )
        self.entries.append(entry)
        return entry

    def export_text(self) -> str:
        """Stable textual form, one line per entry, for golden comparison."""
        lines = []
        for e in self.entries:
            tag = e.tag or "-"
            lines.append(
                f"{e.seq:05d} t={e.at_ms} {tag} {e.channel} {e.msg_type} "
                f"{e.sender} -> {e.recipient} {e.payload.hex()}"
            )
        return "\n".join(lines) + ("\n" if lines else "")

    def find(self, msg_type: str, occurrence: int | None = None) -> LogEntry:
        """Entry by type: latest by default, or the k-th (1-based)."""
        matches = [e for e in self.entries if e.msg_type == msg_type]
        if not matches:
            raise ScenarioError(f"no logged envelope of type {msg_type}")
        if occurrence is None:
            return matches[-1]
        if not 1 <= occurrence <= len(matches):
            raise ScenarioError(f"{msg_type}@{occurrence} out of range (have {len(matches)})")
        return matches[occurrence - 1]


class Network:
    """Channel-addressed synchronous delivery with adversary hooks."""

    def __init__(self, clock: SimClock):
        self.clock = clock
        self.log = EventLog()
        self.handlers: dict[tuple[str, str], object] = {}
        self.on_deliver = None  # callback(LogEntry), used by the REPL

    def register(self, channel: str, endpoint: str, handler):
        self.handlers[(channel, endpoint)] = handler

    def deliver(self, env: Envelope, tag: str | None = None) -> LogEntry:
        handler = self.handlers.get((env.channel, env.recipient))
        if handler is None:
            raise UnknownEndpointError(f"{env.channel}:{env.recipient}")
        entry = self.log.append(env, self.clock.now, tag)
        if self.on_deliver is not None:
            self.on_deliver(entry)
        for response in handler(env, self.clock.now):
            self.deliver(response)
        return entry

    def replay(self, entry: LogEntry) -> LogEntry:
        """Redeliver a recorded payload at the current clock."""
        env = Envelope(
            entry.channel, entry.msg_type, entry.sender, entry.recipient,
            entry.payload, self.clock.now,
        )
        return self.deliver(env, tag="replay")

    def tamper(self, entry: LogEntry, byte_index: int, new_byte: int) -> LogEntry:
        """Redeliver with one payload byte modified."""
        if not 0 <= byte_index < len(entry.payload):
            raise CardauthError(
                f"tamper index {byte_index} out of range for {len(entry.payload)}-byte payload"
            )
        mutated = bytearray(entry.payload)
        mutated[byte_index] = new_byte & 0xFF
        env = Envelope(
            entry.channel, entry.msg_type, entry.sender, entry.recipient,
            bytes(mutated), self.clock.now,
        )
        return self.deliver(env, tag="tamper")

    def delay(self, env: Envelope, ms: int) -> LogEntry:
        """Hold an undelivered envelope for `ms`, then deliver it."""
        self.clock.advance(ms)
        return self.deliver(env, tag="delay")


class World:
    """Server, clients and network wired together under one seed."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.clock = SimClock()
        self.net = Network(self.clock)
        self.server = AuthServer(rng=random.Random(seed))
        self.net.register(NETWORK, SERVER_ENDPOINT, self.server.handle)
        self.actors: dict[str, ClientActor] = {}

    def add_client(self, name: str, email: str, mobile: str, full_name: str) -> ClientActor:
        if name in self.actors:
            raise ScenarioError(f"actor {name} already exists")
        actor = ClientActor(endpoint=name, email=email, mobile=mobile, name=full_name)
        self.net.register(NETWORK, name, actor.handle)
        self.net.register(EMAIL, email, actor.handle)
        self.net.register(SMS, mobile, actor.handle)
        self.actors[name] = actor
        return actor

    def actor(self, name: str) -> ClientActor:
        try:
            return self.actors[name]
        except KeyError:
            raise ScenarioError(f"unknown actor {name!r}") from None

    def adversary_outcome(self, action) -> str:
        """Run an adversary delivery and classify how it was handled.

        Outcome is the reason of the first rejection recorded by any party
        while the delivery (and its responses) were processed, or "ok" when
        everything down the chain accepted it.
        """
        audits = [self.server.audit] + [a.audit for a in self.actors.values()]
        marks = [len(a) for a in audits]
        action()
        for audit, mark in zip(audits, marks):
            for record in audit[mark:]:
                if not record.accepted:
                    return record.reason or "error"
        return "ok"


# ---------------- scenario scripts ----------------


@dataclass(frozen=True)
class ScriptLine:
    lineno: int
    verb: str
    args: tuple[str, ...]
    expected: str
    raw: str


@dataclass
class Scenario:
    seed: int
    lines: list[ScriptLine] = field(default_factory=list)


@dataclass
class LineResult:
    lineno: int
    raw: str
    expected: str
    actual: str

    @property
    def ok(self) -> bool:
        return self.expected == self.actual


@dataclass
class ScenarioReport:
    results: list[LineResult]
    log: EventLog
    world: World

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)


def parse_scenario(text: str) -> Scenario:
    seed = 0
    lines: list[ScriptLine] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=>" in stripped:
            action, expected = stripped.rsplit("=>", 1)
            expected = expected.strip()
        else:
            action, expected = stripped, "ok"
        tokens = action.split()
        if not tokens:
            raise ScenarioError(f"line {lineno}: nothing before =>")
        verb, args = tokens[0], tuple(tokens[1:])
        if verb == "seed":
            if len(args) != 1 or not args[0].lstrip("-").isdigit():
                raise ScenarioError(f"line {lineno}: seed wants one integer")
            seed = int(args[0])
            continue
        lines.append(ScriptLine(lineno, verb, args, expected, stripped))
    return Scenario(seed=seed, lines=lines)


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def run_scenario(scenario: Scenario, seed: int | None = None) -> ScenarioReport:
    """Execute a script against a fresh world; compare each line's outcome."""
    world = World(seed if seed is not None else scenario.seed)
    runner = _Runner(world)
    results = []
    for line in scenario.lines:
        actual = runner.execute(line)
        results.append(LineResult(line.lineno, line.raw, line.expected, actual))
    return ScenarioReport(results=results, log=world.net.log, world=world)


class _Runner:
    def __init__(self, world: World):
        self.world = world
        self.last_sent_text: dict[str, bytes] = {}

    def execute(self, line: ScriptLine) -> str:
        fn = getattr(self, "_do_" + line.verb.replace("-", "_"), None)
        if fn is None:
            raise ScenarioError(f"line {line.lineno}: unknown verb {line.verb!r}")
        try:
            return fn(*line.args)
        except ScenarioError:
            raise
        except TypeError as exc:
            raise ScenarioError(f"line {line.lineno}: bad arguments: {exc}") from exc

    # -- plain actions --

    def _do_advance(self, ms: str) -> str:
        self.world.clock.advance(int(ms))
        return "ok"

    def _do_register(self, name: str, email: str, mobile: str, *full_name: str) -> str:
        actor = self.world.add_client(name, email, mobile, " ".join(full_name) or name)
        result = protocol.register_user(self.world.net, self.world.server, actor)
        return result.outcome

    def _do_login(self, name: str, pin: str, otp: str = "auto") -> str:
        actor = self.world.actor(name)
        use_pin = actor.pin if pin == "-" else pin
        result = protocol.login(
            self.world.net, self.world.server, actor, actor.uid, use_pin or "", otp
        )
        return result.outcome

    def _do_activate(self, name: str, code: str) -> str:
        actor = self.world.actor(name)
        use_code = actor.last_activation_code if code == "auto" else code
        env = actor.build_activate(actor.uid, use_code or "", self.world.clock.now)
        self.world.net.deliver(env)
        rec = self.world.server.audit[-1]
        return "ok" if rec.accepted else (rec.reason or "error")

    def _do_send_card(self, sender: str, recipient: str) -> str:
        s = self.world.actor(sender)
        r = self.world.actor(recipient)
        result = protocol.exchange_public_card(self.world.net, self.world.server, s, r.uid)
        return result.outcome

    def _do_msg(self, sender: str, recipient: str, *words: str) -> str:
        s = self.world.actor(sender)
        r = self.world.actor(recipient)
        text = " ".join(words).encode("utf-8")
        result = protocol.send_message(self.world.net, s, r.uid, text)
        if result.ok:
            self.last_sent_text[recipient] = text
        return result.outcome

    def _do_recv(self, recipient: str) -> str:
        actor = self.world.actor(recipient)
        result = protocol.receive_latest_message(self.world.net, actor)
        if result.ok and result.value != self.last_sent_text.get(recipient):
            return "text-mismatch"
        return result.outcome

    # -- secret-information requests --

    def _do_resend_pin(self, name: str) -> str:
        actor = self.world.actor(name)
        return protocol.resend_pin_flow(self.world.net, self.world.server, actor).outcome

    def _do_change_pin(self, name: str) -> str:
        actor = self.world.actor(name)
        return protocol.change_pin_flow(self.world.net, self.world.server, actor).outcome

    def _do_resend_card(self, name: str, pin: str) -> str:
        actor = self.world.actor(name)
        use_pin = actor.pin if pin == "-" else pin
        return protocol.resend_card_flow(
            self.world.net, self.world.server, actor, use_pin or ""
        ).outcome

    def _do_change_contact(self, name: str, email: str, mobile: str) -> str:
        actor = self.world.actor(name)
        return protocol.change_contact_flow(
            self.world.net, self.world.server, actor, email, mobile
        ).outcome

    def _do_pubkey(self, name: str) -> str:
        actor = self.world.actor(name)
        return protocol.request_pubkey(self.world.net, self.world.server, actor).outcome

    # -- adversary actions --

    def _entry(self, selector: str) -> LogEntry:
        if selector.isdigit():
            seq = int(selector)
            if seq >= len(self.world.net.log.entries):
                raise ScenarioError(f"log seq {seq} out of range")
            return self.world.net.log.entries[seq]
        if "@" in selector:
            msg_type, _, k = selector.partition("@")
            return self.world.net.log.find(msg_type, int(k))
        return self.world.net.log.find(selector)

    def _do_replay(self, selector: str) -> str:
        entry = self._entry(selector)
        return self.world.adversary_outcome(lambda: self.world.net.replay(entry))

    def _do_tamper(self, selector: str, index: str, value: str) -> str:
        entry = self._entry(selector)
        return self.world.adversary_outcome(
            lambda: self.world.net.tamper(entry, int(index), int(value))
        )

    # -- verification --

    def _do_scan(self) -> str:
        findings = protocol.scan_confidentiality(
            self.world.net.log.entries, self.world.server
        )
        return "ok" if not findings else "leaked"
