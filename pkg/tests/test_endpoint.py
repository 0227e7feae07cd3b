"""Source/monitor state machine tests, driven with explicit clocks."""

import pytest

from acp.endpoint import (
    EpochClosed,
    InitComplete,
    MonitorEndpoint,
    SendUpdate,
    SourceConfig,
    SourceEndpoint,
    Stalled,
)
from acp.errors import ConnectionFailedError
from acp.netsim import Delay, NodeSpec, Topology, AcpController, run_acp_in_sim
from acp.wire import AckHeader, UpdateHeader

US = 1_000_000


def s(x):
    return round(x * US)


def ack_for_send(eff: SendUpdate) -> AckHeader:
    return AckHeader(seq=eff.header.seq, echo_timestamp_us=eff.header.gen_timestamp_us)


def drive_until(src, predicate, limit_s=100.0):
    """Step the endpoint at its own wake times until predicate(effects)."""
    out = []
    while True:
        now = src.next_wake_us()
        assert now <= s(limit_s), "endpoint never produced the expected effect"
        effects = src.step(now)
        out.extend(effects)
        if predicate(effects):
            return now, out


class TestInitPhase:
    def test_all_probes_acked(self):
        cfg = SourceConfig(init_probes=3)
        src = SourceEndpoint(cfg, 0)
        now = 0
        for _ in range(3):
            effects = src.step(now)
            (send,) = [e for e in effects if isinstance(e, SendUpdate)]
            now += s(0.1)
            src.on_ack(ack_for_send(send), now)
        effects = src.step(src.next_wake_us())
        (done,) = [e for e in effects if isinstance(e, InitComplete)]
        assert done.rate == pytest.approx(10.0)  # 1 / mean(0.1, 0.1, 0.1)
        assert done.probe_successes == 3

    def test_mean_of_successes_only(self):
        # Two probes answered (0.1 s and 0.3 s), one lost: rate = 1/0.2.
        cfg = SourceConfig(init_probes=3, probe_timeout_s=1.0)
        src = SourceEndpoint(cfg, 0)
        (p1,) = src.step(0)
        src.on_ack(ack_for_send(p1), s(0.1))
        (p2,) = src.step(s(0.1))  # probe 2, never answered
        assert src.next_wake_us() == s(1.1)
        (p3,) = src.step(s(1.1))  # timeout fires, probe 3 goes out
        src.on_ack(ack_for_send(p3), s(1.4))  # rtt 0.3
        effects = src.step(src.next_wake_us())
        (done,) = [e for e in effects if isinstance(e, InitComplete)]
        assert done.rate == pytest.approx(5.0)
        assert done.probe_successes == 2

    def test_all_probes_lost(self):
        cfg = SourceConfig(init_probes=2, probe_timeout_s=0.5)
        src = SourceEndpoint(cfg, 0)
        src.step(0)
        src.step(s(0.5))
        with pytest.raises(ConnectionFailedError):
            src.step(s(1.0))

    def test_late_ack_of_earlier_probe_counts(self):
        cfg = SourceConfig(init_probes=2, probe_timeout_s=0.5)
        src = SourceEndpoint(cfg, 0)
        (p1,) = src.step(0)
        (p2,) = src.step(s(0.5))  # p1 timed out
        # p1's ACK limps home while p2 is outstanding
        res = src.on_ack(ack_for_send(p1), s(0.6))
        assert res.accepted
        assert src._probe_outstanding  # p2 still awaited
        src.on_ack(ack_for_send(p2), s(0.7))
        effects = src.step(src.next_wake_us())
        (done,) = [e for e in effects if isinstance(e, InitComplete)]
        assert done.probe_successes == 2
        # rtts 0.6 and 0.2 -> mean 0.4
        assert done.rate == pytest.approx(2.5)


def minimal_running_source(rtt_s=0.1, **cfg_kwargs):
    """One-probe init for compact running-phase tests."""
    cfg = SourceConfig(init_probes=1, **cfg_kwargs)
    src = SourceEndpoint(cfg, 0)
    (probe,) = src.step(0)
    src.on_ack(ack_for_send(probe), s(rtt_s))
    effects = src.step(src.next_wake_us())
    assert any(isinstance(e, InitComplete) for e in effects)
    return src, effects


class TestRunningPhase:
    def test_constant_send_period_within_epoch(self):
        src, effects = minimal_running_source(rtt_s=0.1)
        assert src.rate == pytest.approx(10.0)
        sends = [e.header.gen_timestamp_us for e in effects if isinstance(e, SendUpdate)]
        while len(sends) < 8:
            effects = src.step(src.next_wake_us())
            if any(isinstance(e, EpochClosed) for e in effects):
                break
            sends += [e.header.gen_timestamp_us for e in effects if isinstance(e, SendUpdate)]
        gaps = {b - a for a, b in zip(sends, sends[1:])}
        assert gaps == {s(0.1)}

    def test_epoch_processed_before_sends_when_both_due(self):
        # rtt 0.1 -> period 0.1 s, epoch length 10*0.1 = 1.0 s, so the
        # tenth send instant coincides with the epoch deadline.
        src, _ = minimal_running_source(rtt_s=0.1)
        deadline = src._epoch_deadline_us
        while src.next_wake_us() < deadline:
            src.step(src.next_wake_us())
        assert src.next_wake_us() == deadline
        effects = src.step(deadline)
        kinds = [type(e).__name__ for e in effects]
        assert kinds[0] == "EpochClosed"
        assert "SendUpdate" in kinds

    def test_seq_strictly_increases(self):
        src, effects = minimal_running_source()
        seqs = [e.header.seq for e in effects if isinstance(e, SendUpdate)]
        for _ in range(30):
            effects = src.step(src.next_wake_us())
            seqs += [e.header.seq for e in effects if isinstance(e, SendUpdate)]
        assert seqs == sorted(set(seqs))

    def test_halt_sending_keeps_epochs(self):
        src, _ = minimal_running_source()
        src.halt_sending()
        _, effects = drive_until(
            src, lambda es: any(isinstance(e, EpochClosed) for e in es)
        )
        assert not any(isinstance(e, SendUpdate) for e in effects)

    def test_estimator_updates_on_acks(self):
        # Probe acked at t=0.1 seeds the RTT estimate and the accept clock;
        # z seeds from the gap to the next accepted ACK, then smooths.
        src, effects = minimal_running_source(rtt_s=0.1)
        assert src.rtt_ewma.value == pytest.approx(0.1)
        assert not src.z_ewma.initialized
        sends = [e for e in effects if isinstance(e, SendUpdate)]
        while len(sends) < 2:
            effects = src.step(src.next_wake_us())
            sends += [e for e in effects if isinstance(e, SendUpdate)]
        t1 = s(0.1) + s(0.12)
        src.on_ack(ack_for_send(sends[0]), t1)
        assert src.z_ewma.value == pytest.approx(0.12)  # seeded, not blended
        assert src.rtt_ewma.value == pytest.approx(0.875 * 0.1 + 0.125 * 0.12)
        src.on_ack(ack_for_send(sends[1]), t1 + s(0.08))
        assert src.z_ewma.value == pytest.approx(0.875 * 0.12 + 0.125 * 0.08)

    def test_stale_ack_changes_nothing(self):
        src, effects = minimal_running_source()
        sends = [e for e in effects if isinstance(e, SendUpdate)]
        while len(sends) < 2:
            effects = src.step(src.next_wake_us())
            sends += [e for e in effects if isinstance(e, SendUpdate)]
        now = sends[1].header.gen_timestamp_us + s(0.05)
        src.on_ack(ack_for_send(sends[1]), now)
        rtt_before = src.rtt_ewma.value
        backlog_before = src.path.backlog()
        res = src.on_ack(ack_for_send(sends[0]), now + 1)
        assert not res.accepted
        assert src.rtt_ewma.value == rtt_before
        assert src.path.backlog() == backlog_before


class TestStall:
    def test_stall_fires_then_recovers(self):
        src, effects = minimal_running_source(rtt_s=0.1)
        # Never ack anything again: after stall_epochs * 1.0 s of silence
        # a single Stalled effect must surface.
        now, out = drive_until(
            src, lambda es: any(isinstance(e, Stalled) for e in es), limit_s=30
        )
        stall_effects = [e for e in out if isinstance(e, Stalled)]
        assert len(stall_effects) == 1
        assert now >= s(10.0)
        assert stall_effects[0].silent_for_s >= 10.0
        # the next epoch close records the stall and freezes the rate
        rate_frozen = src.rate
        now, more = drive_until(
            src, lambda es: any(isinstance(e, EpochClosed) for e in es), limit_s=30
        )
        out += more
        assert src.rows[-1].action == "STALL"
        assert not [e for e in out if isinstance(e, Stalled)][1:]  # still just one
        assert src.rate == rate_frozen
        # a fresh ACK clears the stall
        sends = [e for e in out if isinstance(e, SendUpdate)]
        src.on_ack(ack_for_send(sends[-1]), now + s(0.05))
        assert not src.stalled
        assert src.rate == rate_frozen  # rate changes only at epoch closes


class TestControllers:
    def test_lazy_tracks_inverse_rtt(self):
        src, effects = minimal_running_source(rtt_s=0.1, controller="lazy")
        sends = [e for e in effects if isinstance(e, SendUpdate)]
        now = sends[0].header.gen_timestamp_us + s(0.2)
        src.on_ack(ack_for_send(sends[0]), now)
        assert src.rate == pytest.approx(1.0 / src.rtt_ewma.value)

    def test_fixed_rate_ignores_measurements(self):
        src, _ = minimal_running_source(rtt_s=0.1, controller="fixed", fixed_rate=7.0)
        assert src.rate == pytest.approx(7.0)
        for _ in range(40):
            src.step(src.next_wake_us())
        assert src.rate == pytest.approx(7.0)

    def test_fixed_requires_rate(self):
        with pytest.raises(ValueError):
            SourceConfig(controller="fixed")

    def test_unknown_controller_rejected(self):
        with pytest.raises(ValueError):
            SourceConfig(controller="turbo")


class TestConstantDelayPath:
    def test_accepted_rtts_equal_2d_exactly(self):
        d = 0.004
        topo = Topology(
            forward=(NodeSpec(Delay(d)),),
            reverse=(NodeSpec(Delay(d)),),
        )
        rep = run_acp_in_sim(topo, AcpController(), duration_s=40, seed=2)
        assert rep.mean_rtt == pytest.approx(2 * d, abs=1e-9)
        assert rep.monitor_discards == 0
        assert not rep.stalled


class TestMonitor:
    def test_filter_and_ack(self):
        m = MonitorEndpoint()
        ack = m.on_update(UpdateHeader(seq=1, gen_timestamp_us=100, payload_len=0), 500)
        assert ack == AckHeader(seq=1, echo_timestamp_us=100)
        assert m.on_update(UpdateHeader(seq=5, gen_timestamp_us=900, payload_len=0), 950)
        # out of sequence: silence, state untouched
        assert m.on_update(UpdateHeader(seq=4, gen_timestamp_us=800, payload_len=0), 960) is None
        st = m.peer()
        assert st.freshest_seq == 5
        assert st.freshest_gen_us == 900
        assert st.received == 3
        assert st.accepted == 2
        assert st.discarded == 1

    def test_peers_are_independent(self):
        m = MonitorEndpoint()
        m.on_update(UpdateHeader(seq=9, gen_timestamp_us=1, payload_len=0), 10, peer="a")
        ack = m.on_update(UpdateHeader(seq=1, gen_timestamp_us=2, payload_len=0), 11, peer="b")
        assert ack is not None
        assert m.peer("a").freshest_seq == 9
        assert m.peer("b").freshest_seq == 1

    def test_freshest_timestamp_never_decreases_under_replay(self):
        import itertools
        updates = [
            UpdateHeader(seq=i, gen_timestamp_us=i * 10, payload_len=0)
            for i in (1, 2, 3, 4)
        ]
        for perm in itertools.permutations(updates):
            m = MonitorEndpoint()
            last = -1
            for k, u in enumerate(perm):
                m.on_update(u, 1000 + k)
                assert m.peer().freshest_gen_us >= last
                last = m.peer().freshest_gen_us
