"""Latest-value publish/subscribe bus in the style of the autopilot's uORB.

Delivery is synchronous and single-threaded: callbacks registered on a
topic run inside ``publish`` in registration order. Time is virtual; the
bus clock is an integer microsecond counter advanced by :func:`run_ticks`.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np


class TopicId(str, enum.Enum):
    vehicle_angular_velocity = "vehicle_angular_velocity"
    vehicle_attitude = "vehicle_attitude"
    vehicle_local_position = "vehicle_local_position"
    trajectory_setpoint = "trajectory_setpoint"
    actuator_motors = "actuator_motors"
    vehicle_command = "vehicle_command"
    flight_mode_status = "flight_mode_status"


PAYLOAD_SIZE = {
    TopicId.vehicle_angular_velocity: 3,  # rad/s body
    TopicId.vehicle_attitude: 4,  # quaternion w, x, y, z
    TopicId.vehicle_local_position: 6,  # NED position m, velocity m/s
    TopicId.trajectory_setpoint: 3,  # NED position m
    TopicId.actuator_motors: 4,  # normalized rotor speed commands
    TopicId.vehicle_command: 1,  # command code
    TopicId.flight_mode_status: 1,  # FlightMode value
}


@dataclass(frozen=True)
class TopicMessage:
    topic: TopicId
    timestamp: int  # us, monotonic
    payload: np.ndarray

    def __post_init__(self):
        topic = TopicId(self.topic)
        payload = np.array(self.payload, dtype=float).reshape(-1)
        if payload.size != PAYLOAD_SIZE[topic]:
            raise ValueError(f"{topic.value} payload needs {PAYLOAD_SIZE[topic]} values, got {payload.size}")
        payload.setflags(write=False)
        object.__setattr__(self, "topic", topic)
        object.__setattr__(self, "timestamp", int(self.timestamp))
        object.__setattr__(self, "payload", payload)


@dataclass(frozen=True)
class Registration:
    topic: TopicId
    callback: Callable
    token: int


class TopicBus:
    """Depth-1 topics with generation counters and synchronous callbacks."""

    def __init__(self, trace: bool = False):
        self._latest: dict = {}
        self._generation = {t: 0 for t in TopicId}
        self._callbacks = {t: [] for t in TopicId}
        self._next_token = 0
        self.clock_us = 0
        self.trace = [] if trace else None

    def _store(self, message: TopicMessage) -> None:
        prev = self._latest.get(message.topic)
        if prev is not None and message.timestamp < prev.timestamp:
            raise ValueError(
                f"timestamp went backwards on {message.topic.value}: {message.timestamp} < {prev.timestamp}"
            )
        self._latest[message.topic] = message
        self._generation[message.topic] += 1
        if self.trace is not None:
            self.trace.append((message.topic.value, self._generation[message.topic], message.timestamp,
                               tuple(message.payload.tolist())))

    def _dispatch(self, message: TopicMessage) -> None:
        # copy: callbacks may (de)register while we iterate
        for reg in tuple(self._callbacks[message.topic]):
            reg.callback(message)

    def publish(self, message: TopicMessage) -> None:
        self._store(message)
        self._dispatch(message)

    def publish_many(self, messages: Iterable[TopicMessage]) -> None:
        """Store a group of messages in order, then fire their callbacks in order.

        Used for per-tick state so a callback triggered by the first message
        already sees every state topic of the same tick.
        """
        messages = list(messages)
        for m in messages:
            self._store(m)
        for m in messages:
            self._dispatch(m)

    def read_latest(self, topic: TopicId):
        """Returns ``(message, generation)`` or ``None`` before the first publish."""
        topic = TopicId(topic)
        msg = self._latest.get(topic)
        if msg is None:
            return None
        return msg, self._generation[topic]

    def generation(self, topic: TopicId) -> int:
        return self._generation[TopicId(topic)]

    def schedule_on(self, topic: TopicId, callback: Callable) -> Registration:
        topic = TopicId(topic)
        reg = Registration(topic, callback, self._next_token)
        self._next_token += 1
        self._callbacks[topic].append(reg)
        return reg

    def unschedule(self, registration: Registration) -> None:
        regs = self._callbacks[registration.topic]
        if registration in regs:
            regs.remove(registration)

    def write_trace(self, path: str | Path) -> None:
        if self.trace is None:
            raise RuntimeError("bus was created without trace=True")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["topic", "generation", "timestamp_us", "payload"])
            for topic, gen, ts, payload in self.trace:
                w.writerow([topic, gen, ts, " ".join(repr(v) for v in payload)])


def tick_period_us(rate_hz: float) -> int:
    return int(round(1e6 / rate_hz))


def vehicle_state_messages(state, timestamp: int) -> list:
    """Angular velocity, attitude, local position, in that order."""
    return [
        TopicMessage(TopicId.vehicle_angular_velocity, timestamp, state.angular_velocity),
        TopicMessage(TopicId.vehicle_attitude, timestamp, state.attitude),
        TopicMessage(TopicId.vehicle_local_position, timestamp, np.concatenate([state.position, state.velocity])),
    ]


def run_ticks(bus: TopicBus, sim, rate_hz: float, duration_s: float,
              state_publisher: Callable | None = None, should_stop: Callable | None = None) -> int:
    """Virtual-time control loop.

    Each tick advances ``sim`` by ``1/rate_hz``, publishes the state returned
    by ``state_publisher(sim, timestamp_us)`` as one group, then advances the
    bus clock by the integer tick period. No wall-clock sleeping.

    Args:
        sim: object with ``step(dt)`` and (for the default publisher) ``state``.
        should_stop: optional predicate checked after each tick.

    Returns:
        number of ticks executed.
    """
    if rate_hz <= 0:
        raise ValueError("rate_hz must be positive")
    publisher = state_publisher or (lambda s, t: vehicle_state_messages(s.state, t))
    period = tick_period_us(rate_hz)
    dt = 1.0 / rate_hz
    n = int(round(duration_s * rate_hz))
    for k in range(n):
        sim.step(dt)
        bus.publish_many(publisher(sim, bus.clock_us))
        bus.clock_us += period
        if should_stop is not None and should_stop():
            return k + 1
    return n
