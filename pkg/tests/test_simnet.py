"""Transport determinism, adversary actions, scenario machinery."""

from pathlib import Path

import pytest

import cardauth
from cardauth import protocol, simnet
from cardauth.errors import CardauthError, ScenarioError
from cardauth.protocol import NETWORK, Envelope
from cardauth.simnet import (
    Network,
    SimClock,
    UnknownEndpointError,
    World,
    load_scenario,
    parse_scenario,
    run_scenario,
)

SCENARIO_DIR = Path(cardauth.__file__).parent / "scenarios"
BUNDLED = ["happy_path.txt", "three_strikes.txt", "mitm_replay.txt"]


class TestClockAndDelivery:
    def test_clock_monotone(self):
        clock = SimClock()
        clock.advance(10)
        assert clock.now == 10
        with pytest.raises(CardauthError):
            clock.advance(-1)

    def test_unknown_endpoint(self):
        net = Network(SimClock())
        env = Envelope(NETWORK, "x", "a", "nobody", b"", 0)
        with pytest.raises(UnknownEndpointError):
            net.deliver(env)

    def test_each_delivery_logs_exactly_once(self):
        net = Network(SimClock())
        net.register(NETWORK, "sink", lambda env, now: [])
        env = Envelope(NETWORK, "x", "a", "sink", b"payload", 0)
        net.deliver(env)
        assert len(net.log.entries) == 1
        net.deliver(env)
        assert len(net.log.entries) == 2

    def test_responses_logged_in_order(self):
        clock = SimClock()
        net = Network(clock)
        reply = Envelope(NETWORK, "pong", "b", "a", b"", 0)
        net.register(NETWORK, "b", lambda env, now: [reply])
        net.register(NETWORK, "a", lambda env, now: [])
        net.deliver(Envelope(NETWORK, "ping", "a", "b", b"", 0))
        assert [e.msg_type for e in net.log.entries] == ["ping", "pong"]


class TestAdversaryOps:
    def _logged_in_world(self):
        world = World(seed=77)
        actor = world.add_client("alice", "alice@example.com", "0790000001", "Alice")
        assert protocol.register_user(world.net, world.server, actor).ok
        assert protocol.login(world.net, world.server, actor, actor.uid, actor.pin).ok
        return world, actor

    def test_replay_is_tagged(self):
        world, _ = self._logged_in_world()
        entry = world.net.log.find("login-auth")
        replayed = world.net.replay(entry)
        assert replayed.tag == "replay"
        assert replayed.payload == entry.payload

    def test_tamper_index_out_of_range(self):
        world, _ = self._logged_in_world()
        entry = world.net.log.find("login-auth")
        with pytest.raises(CardauthError):
            world.net.tamper(entry, len(entry.payload), 0)

    def test_tamper_with_same_byte_is_noop_and_accepted(self):
        world, _ = self._logged_in_world()
        entry = world.net.log.find("login-auth")
        idx = 20
        world.net.tamper(entry, idx, entry.payload[idx])
        assert world.server.audit[-1].accepted  # same-window duplicate, accepted

    def test_delay_boundaries(self):
        world, actor = self._logged_in_world()
        window = world.server.config.window.max_delay_ms
        env = actor.build_login_auth(actor.uid, actor.pin, world.clock.now)
        world.net.delay(env, window)
        assert world.server.audit[-1].accepted
        env = actor.build_login_auth(actor.uid, actor.pin, world.clock.now)
        world.net.delay(env, window + 1)
        rec = world.server.audit[-1]
        assert not rec.accepted and rec.reason == "stale-timestamp"
        env = actor.build_login_auth(actor.uid, actor.pin, world.clock.now)
        world.net.delay(env, 0)
        assert world.server.audit[-1].accepted

    def test_replay_of_consumed_otp(self):
        world, _ = self._logged_in_world()
        entry = world.net.log.find("otp-submit")
        world.net.replay(entry)
        rec = world.server.audit[-1]
        assert not rec.accepted and rec.reason == "wrong-otp"


class TestScenarioMachinery:
    def test_parse_lines_and_seed(self):
        sc = parse_scenario("seed 9\nadvance 10 => ok\n# comment\n\nscan => ok\n")
        assert sc.seed == 9
        assert [l.verb for l in sc.lines] == ["advance", "scan"]
        assert sc.lines[0].expected == "ok"

    def test_default_expectation_is_ok(self):
        sc = parse_scenario("advance 10\n")
        assert sc.lines[0].expected == "ok"

    def test_unknown_verb(self):
        sc = parse_scenario("fly alice => ok\n")
        with pytest.raises(ScenarioError):
            run_scenario(sc)

    def test_unknown_actor(self):
        sc = parse_scenario("login ghost - => ok\n")
        with pytest.raises(ScenarioError):
            run_scenario(sc)

    def test_bad_selector(self):
        sc = parse_scenario("replay login-auth => ok\n")
        with pytest.raises(ScenarioError):
            run_scenario(sc)  # nothing logged yet

    @pytest.mark.parametrize("name", BUNDLED)
    def test_bundled_scenarios_pass(self, name):
        report = run_scenario(load_scenario(SCENARIO_DIR / name))
        failures = [r for r in report.results if not r.ok]
        assert report.ok, failures

    @pytest.mark.parametrize("name", BUNDLED)
    def test_bundled_scenarios_deterministic(self, name):
        sc = load_scenario(SCENARIO_DIR / name)
        log1 = run_scenario(sc).log.export_text()
        log2 = run_scenario(sc).log.export_text()
        assert log1 == log2
        assert log1  # not empty

    def test_explicit_otp_argument(self):
        sc = parse_scenario(
            "register zoe zoe@example.com 0790000030 Zoe => ok\n"
            "login zoe - 000000 => wrong-otp\n"
            "login zoe - => ok\n"
        )
        report = run_scenario(sc, seed=3)
        assert report.ok, [r for r in report.results if not r.ok]

    def test_seed_changes_log(self):
        sc = load_scenario(SCENARIO_DIR / "happy_path.txt")
        log1 = run_scenario(sc).log.export_text()
        log2 = run_scenario(sc, seed=999).log.export_text()
        assert log1 != log2

    def test_adversary_deliveries_never_accepted_except_documented(self):
        # defense-coverage: in the bundled adversary scenario, every replayed
        # or tampered delivery the server acts on is rejected, except the
        # same-window login replay the script itself documents as a gap.
        report = run_scenario(load_scenario(SCENARIO_DIR / "mitm_replay.txt"))
        assert report.ok
        expected_accepts = [
            r for r in report.results
            if r.raw.startswith(("replay", "tamper")) and r.expected == "ok"
        ]
        # the documented-gap acceptances are visible and deliberate:
        # one same-window login replay, one user-msg replay and one tamper
        # whose verification happens at the recv step
        assert len(expected_accepts) == 3


class TestAmbientTimeBan:
    def test_protocol_modules_never_read_wall_clock(self):
        import cardauth
        src_dir = Path(cardauth.__file__).parent
        banned = ("time.time(", "datetime.now(", "time.monotonic(", "perf_counter(")
        for module in ("protocol.py", "simnet.py", "authmsg.py", "cards.py",
                       "rc4pr.py", "rsa.py", "framing.py"):
            text = (src_dir / module).read_text()
            for token in banned:
                assert token not in text, f"{module} reads ambient time via {token}"
