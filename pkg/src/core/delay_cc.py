"""Delay-based low-priority congestion control: LEDBAT and TCP-LP.

Both reuse the TCP sender's loss recovery and only change how the window
reacts to one-way delay carried back on ACKs.
"""

from __future__ import annotations

import logging
from collections import deque
from enum import Enum
from typing import Optional

from core.config import LedbatConfig, TcpConfig, TcpLpConfig
from core.models import FlowSpec, Packet
from core.tcp import Phase, SenderEnvironment, TcpSender
from core.units import MSS_BYTES

LOGGER = logging.getLogger(__name__)


class LedbatWindow:
    """Target-delay window controller.

    Base delay is the lifetime minimum of one-way delay samples; current
    delay is the minimum of the last few samples.
    """

    def __init__(self, config: LedbatConfig) -> None:
        self.target_ns = config.target_ns
        self.gain = config.gain
        self.allowed_increase = config.allowed_increase_packets
        self.base_delay: Optional[int] = None
        self._current = deque(maxlen=config.current_filter_samples)

    @property
    def queuing_delay(self) -> int:
        if self.base_delay is None or not self._current:
            return 0
        return min(self._current) - self.base_delay

    def observe(self, sample_ns: int) -> None:
        if self.base_delay is None or sample_ns < self.base_delay:
            self.base_delay = sample_ns
        self._current.append(sample_ns)

    def adjust(self, cwnd: float, flight: int) -> float:
        off_target = (self.target_ns - self.queuing_delay) / self.target_ns
        window = cwnd + self.gain * off_target * MSS_BYTES
        # No faster than slow start would grow from the current flight.
        window = min(window, flight + self.allowed_increase * MSS_BYTES)
        return max(window, float(MSS_BYTES))

    def update(self, cwnd: float, flight: int, sample_ns: int) -> float:
        self.observe(sample_ns)
        return self.adjust(cwnd, flight)


class LedbatSender(TcpSender):
    """LEDBAT on top of TCP loss recovery, without slow start."""

    slow_start_enabled = False

    def __init__(
        self,
        spec: FlowSpec,
        config: TcpConfig,
        ledbat: LedbatConfig,
        env: SenderEnvironment,
        ecn_capable: bool = False,
    ) -> None:
        super().__init__(spec, config, env, ecn_capable)
        self.window = LedbatWindow(ledbat)
        self._last_window_cut: Optional[int] = None

    def _on_delay_sample(self, ack: Packet, arrived_at: int) -> None:
        self.window.observe(ack.one_way_delay_ns)

    def _grow(self, acked: int, now: int, flight_before: int) -> None:
        self.cwnd = min(self.window.adjust(self.cwnd, flight_before), float(self._window_limit))

    def _loss_ssthresh(self, now: int) -> float:
        rtt = self.estimator.srtt if self.estimator.srtt is not None else self.config.initial_rto_ns
        if self._last_window_cut is not None and now - self._last_window_cut < rtt:
            return self.cwnd
        self._last_window_cut = now
        return max(self.cwnd / 2, float(MSS_BYTES))


class LpSignal(Enum):
    NONE = "none"
    HALVE = "halve"
    COLLAPSE = "collapse"


class LowPriorityDetector:
    """Early congestion indication from smoothed one-way delay.

    An indication fires when the smoothed delay crosses
    min + delta * (max - min); a second one inside the inference window that
    follows the first means the competing traffic did not back off.
    """

    def __init__(self, config: TcpLpConfig) -> None:
        self.delta = config.delta
        self.smoothed: Optional[float] = None
        self.min_owd: Optional[int] = None
        self.max_owd: Optional[int] = None
        self.inference_until = -1
        self.last_indication: Optional[int] = None
        self.above = False

    def threshold(self) -> Optional[float]:
        if self.min_owd is None or self.max_owd is None or self.max_owd <= self.min_owd:
            return None
        return self.min_owd + self.delta * (self.max_owd - self.min_owd)

    def observe(self, sample_ns: int, now: int, rtt_ns: int) -> LpSignal:
        if self.smoothed is None:
            self.smoothed = float(sample_ns)
        else:
            self.smoothed = (7 * self.smoothed + sample_ns) / 8
        self.min_owd = sample_ns if self.min_owd is None else min(self.min_owd, sample_ns)
        self.max_owd = sample_ns if self.max_owd is None else max(self.max_owd, sample_ns)
        threshold = self.threshold()
        if threshold is None or self.smoothed <= threshold:
            self.above = False
            return LpSignal.NONE
        if self.above and self.last_indication is not None and now < self.last_indication + rtt_ns:
            return LpSignal.NONE
        repeated = now < self.inference_until
        self.above = True
        self.last_indication = now
        self.inference_until = now + rtt_ns
        return LpSignal.COLLAPSE if repeated else LpSignal.HALVE

    def suppresses_growth(self, now: int) -> bool:
        return self.above or now < self.inference_until


class TcpLpSender(TcpSender):
    """TCP-LP: yields on delay indications before any loss occurs."""

    def __init__(
        self,
        spec: FlowSpec,
        config: TcpConfig,
        lp: TcpLpConfig,
        env: SenderEnvironment,
        ecn_capable: bool = False,
    ) -> None:
        super().__init__(spec, config, env, ecn_capable)
        self.detector = LowPriorityDetector(lp)
        self.indications = 0

    def tcplp_update(self, sample_ns: int, now: int) -> LpSignal:
        rtt = self.estimator.srtt if self.estimator.srtt is not None else self.config.initial_rto_ns
        signal = self.detector.observe(sample_ns, now, rtt)
        if signal is LpSignal.NONE:
            return signal
        self.indications += 1
        if signal is LpSignal.COLLAPSE:
            self.cwnd = float(MSS_BYTES)
        else:
            self.cwnd = max(self.cwnd / 2, float(MSS_BYTES))
        self.ssthresh = self.cwnd
        if self.phase is Phase.SLOW_START:
            self.phase = Phase.AVOIDANCE
        LOGGER.debug("Flow %s: early congestion %s, cwnd=%s", self.flow_id, signal.value, self.cwnd)
        return signal

    def _on_delay_sample(self, ack: Packet, arrived_at: int) -> None:
        self.tcplp_update(ack.one_way_delay_ns, arrived_at)

    def _grow(self, acked: int, now: int, flight_before: int) -> None:
        if self.detector.suppresses_growth(now):
            return
        super()._grow(acked, now, flight_before)
