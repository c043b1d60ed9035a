from __future__ import annotations

from core.config import LedbatConfig, TcpConfig, TcpLpConfig
from core.delay_cc import LedbatSender, LedbatWindow, LowPriorityDetector, LpSignal, TcpLpSender
from core.engine import Engine
from core.ledger import GlobalLossLedger
from core.models import Admission, FlowSpec, Packet, PacketKind
from core.tcp import Phase, SenderEnvironment
from core.units import MSS_BYTES, NS_PER_US

TARGET = 3_200 * NS_PER_US
BASE = 100 * NS_PER_US


def _make_env() -> SenderEnvironment:
    return SenderEnvironment(
        engine=Engine(),
        ledger=GlobalLossLedger(),
        wake=lambda sender: None,
        push=lambda packet: Admission.ACCEPTED,
        finished=lambda sender, now: None,
    )


def _spec(size: int = 1024 * 1024) -> FlowSpec:
    return FlowSpec(flow_id=3, src=4, dst=0, size=size, priority_class=1, arrival_time=0)


def _dupack() -> Packet:
    return Packet(flow_id=3, start=0, end=0, size=64, priority_class=1, src=0, dst=4, kind=PacketKind.ACK, ack=0)


def _window_at(queuing_delay: int) -> LedbatWindow:
    window = LedbatWindow(LedbatConfig(target_ns=TARGET, current_filter_samples=1))
    window.observe(BASE)
    window.observe(BASE + queuing_delay)
    return window


def test_ledbat_holds_window_at_target_delay() -> None:
    window = _window_at(TARGET)

    assert window.queuing_delay == TARGET
    assert window.adjust(10.0 * MSS_BYTES, flight=100 * MSS_BYTES) == 10.0 * MSS_BYTES


def test_ledbat_grows_one_segment_with_empty_queue() -> None:
    window = _window_at(0)

    assert window.adjust(10.0 * MSS_BYTES, flight=100 * MSS_BYTES) == 11.0 * MSS_BYTES


def test_ledbat_shrinks_one_segment_at_twice_target() -> None:
    window = _window_at(2 * TARGET)

    assert window.adjust(10.0 * MSS_BYTES, flight=100 * MSS_BYTES) == 9.0 * MSS_BYTES


def test_ledbat_growth_is_capped_by_flight_and_floored_at_one_segment() -> None:
    assert _window_at(0).adjust(10.0 * MSS_BYTES, flight=2 * MSS_BYTES) == 3.0 * MSS_BYTES
    assert _window_at(10 * TARGET).adjust(float(MSS_BYTES), flight=100 * MSS_BYTES) == MSS_BYTES


def test_ledbat_base_delay_is_lifetime_minimum() -> None:
    window = LedbatWindow(LedbatConfig(target_ns=TARGET, current_filter_samples=2))
    for sample in (500, 300, 900, 800):
        window.observe(sample)

    assert window.base_delay == 300
    assert window.queuing_delay == 500


def test_ledbat_sender_skips_slow_start_and_halves_once_per_rtt() -> None:
    sender = LedbatSender(_spec(), TcpConfig(sack_enabled=False), LedbatConfig(), _make_env())
    assert sender.phase is Phase.AVOIDANCE

    sender.cwnd = 20.0 * MSS_BYTES
    sender.on_send_opportunity(0)
    for _ in range(3):
        sender.on_ack(_dupack(), 100)

    assert sender.phase is Phase.FAST_RECOVERY
    assert sender.cwnd == 10.0 * MSS_BYTES
    # A second loss inside the same round trip leaves the window alone.
    assert sender._loss_ssthresh(200) == 10.0 * MSS_BYTES


def test_tcplp_detector_halves_then_collapses_inside_inference_window() -> None:
    detector = LowPriorityDetector(TcpLpConfig(delta=0.15))
    rtt = 1_000
    steps = [
        (100, 0, LpSignal.NONE),
        (1_000, 10, LpSignal.NONE),
        (1_000, 20, LpSignal.HALVE),
        (1_000, 30, LpSignal.NONE),
        (100, 40, LpSignal.NONE),
        (100, 50, LpSignal.NONE),
        (100, 60, LpSignal.NONE),
        (100, 70, LpSignal.NONE),
        (1_000, 80, LpSignal.COLLAPSE),
    ]

    for sample, now, expected in steps:
        assert detector.observe(sample, now, rtt) is expected, (sample, now)

    assert detector.threshold() == 100 + 0.15 * 900
    assert detector.suppresses_growth(80)
    assert detector.inference_until == 1_080


def test_tcplp_detector_waits_for_a_delay_spread() -> None:
    detector = LowPriorityDetector(TcpLpConfig())

    for now in range(5):
        assert detector.observe(500, now, 1_000) is LpSignal.NONE
    assert detector.threshold() is None


def test_tcplp_sender_halves_window_on_indication() -> None:
    sender = TcpLpSender(_spec(), TcpConfig(), TcpLpConfig(delta=0.15), _make_env())
    sender.cwnd = 20.0 * MSS_BYTES

    signals = [sender.tcplp_update(sample, now) for sample, now in ((100, 0), (1_000, 10), (1_000, 20))]

    assert signals[-1] is LpSignal.HALVE
    assert sender.cwnd == 10.0 * MSS_BYTES
    assert sender.ssthresh == sender.cwnd
    assert sender.phase is Phase.AVOIDANCE
    assert sender.indications == 1
