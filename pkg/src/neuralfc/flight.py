"""Flight stack: mode state machine, square mission, scripted flights.

A :class:`FlightStack` wires the simulator, the topic bus, the classical
cascade and the neural runtime together. Its controller runs as a callback
on every angular-velocity publication, reads the attitude and local
position of the same tick, and publishes motor commands.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .cascade import CascadeController, CascadeGains
from .dynamics import RigidBodyState, VehicleParams, integrate
from .errors import ConfigError, FlightFailed, ParameterError
from .middleware import TopicBus, TopicId, TopicMessage, run_ticks
from .observation import up_alignment
from .rotations import quat_from_euler, quat_to_euler
from .runtime import InferenceRuntime

log = logging.getLogger(__name__)

RECOVERY_RADIUS = 0.3  # m

TELEMETRY_COLUMNS = (
    "time", "mode",
    "pos_x", "pos_y", "pos_z",
    "sp_x", "sp_y", "sp_z",
    "vel_x", "vel_y", "vel_z",
    "motor_1", "motor_2", "motor_3", "motor_4",
)


class FlightMode(enum.IntEnum):
    Disarmed = 0
    PositionMode = 1
    NeuralMode = 2


class Command(enum.IntEnum):
    ARM = 1
    DISARM = 2
    POSITION = 3
    NEURAL = 4


def mode_switch(current: FlightMode, command: Command | None, airborne: bool, fault: bool,
                events: list | None = None) -> FlightMode:
    """Apply one command (or none) plus the fault rule to the current mode.

    A fault in NeuralMode always wins and drops to PositionMode. Illegal
    commands leave the mode unchanged and are appended to ``events``.
    """
    if fault and current == FlightMode.NeuralMode:
        return FlightMode.PositionMode
    if command is None:
        return current
    new = current
    if command == Command.ARM and current == FlightMode.Disarmed:
        new = FlightMode.PositionMode
    elif command == Command.NEURAL and current == FlightMode.PositionMode and airborne:
        new = FlightMode.NeuralMode
    elif command == Command.POSITION and current in (FlightMode.PositionMode, FlightMode.NeuralMode):
        new = FlightMode.PositionMode
    elif command == Command.DISARM and current == FlightMode.PositionMode and not airborne:
        new = FlightMode.Disarmed
    elif not (command == Command.ARM and current != FlightMode.Disarmed):
        msg = f"rejected {command.name} in {current.name} (airborne={airborne})"
        log.info(msg)
        if events is not None:
            events.append(msg)
    return new


@dataclass(frozen=True)
class MissionPlan:
    center: tuple
    side: float
    waypoints: tuple
    accept_radius: float
    dwell: float
    timeout: float


def square_mission(center, side: float, accept_radius: float = 0.15, dwell: float = 1.0,
                   timeout: float = 10.0) -> MissionPlan:
    """Center, four corners counterclockwise from front-right, center again."""
    if not side > 0:
        raise ParameterError(f"side must be positive, got {side}")
    c = np.asarray(center, dtype=float)
    h = side / 2.0
    corners = [c + (h, h, 0.0), c + (-h, h, 0.0), c + (-h, -h, 0.0), c + (h, -h, 0.0)]
    wps = tuple(tuple(map(float, w)) for w in [c] + corners + [c])
    return MissionPlan(tuple(map(float, c)), float(side), wps, accept_radius, dwell, timeout)


@dataclass
class LegStats:
    index: int
    waypoint: tuple
    start: float
    end: float = float("nan")
    timed_out: bool = False
    errors: list = field(default_factory=list, repr=False)
    times: list = field(default_factory=list, repr=False)

    def summary(self, dwell: float) -> dict:
        e = np.asarray(self.errors)
        t = np.asarray(self.times)
        tail = e[t >= self.end - dwell] if len(e) else e
        return dict(
            waypoint=self.index,
            target=list(self.waypoint),
            duration=self.end - self.start,
            mean_error=float(e.mean()) if len(e) else float("nan"),
            max_error=float(e.max()) if len(e) else float("nan"),
            steady_state_error=float(tail.mean()) if len(tail) else float("nan"),
            timed_out=self.timed_out,
        )


class MissionRunner:
    """Sequences waypoints; index only ever moves forward."""

    def __init__(self, plan: MissionPlan):
        self.plan = plan
        self.index = 0
        self.finished = False
        self._inside_since = None
        self.legs: list = []

    def tick(self, position, now: float):
        """Returns ``(setpoint, finished)`` after accounting for this sample."""
        plan = self.plan
        if self.finished:
            return np.asarray(plan.waypoints[-1]), True
        if not self.legs or self.legs[-1].index != self.index:
            self.legs.append(LegStats(self.index, plan.waypoints[self.index], now))
            self._inside_since = None
        leg = self.legs[-1]
        wp = np.asarray(plan.waypoints[self.index])
        err = float(np.linalg.norm(np.asarray(position) - wp))
        leg.errors.append(err)
        leg.times.append(now)
        if err <= plan.accept_radius:
            if self._inside_since is None:
                self._inside_since = now
        else:
            self._inside_since = None
        # small epsilon absorbs float accumulation in tick times
        reached = self._inside_since is not None and now - self._inside_since >= plan.dwell - 1e-9
        timed_out = now - leg.start >= plan.timeout - 1e-9
        if reached or timed_out:
            leg.end = now
            leg.timed_out = not reached
            if self.index == len(plan.waypoints) - 1:
                self.finished = True
            else:
                self.index += 1
        return np.asarray(plan.waypoints[min(self.index, len(plan.waypoints) - 1)]), self.finished


def mission_tick(runner: MissionRunner, position, now: float):
    return runner.tick(position, now)


class VehicleSim:
    """Rigid body plus a flat ground at ``ground_z`` (NED) and crash detection."""

    def __init__(self, params: VehicleParams, state: RigidBodyState, ground_z: float = 0.0,
                 crash_speed: float = 2.0):
        self.params = params
        self.state = state
        self.ground_z = ground_z
        self.crash_speed = crash_speed
        self.commands = np.zeros(4)  # normalized rotor speed
        self.crashed = None
        self.on_ground = state.position[2] >= ground_z

    def step(self, dt: float) -> None:
        s = integrate(self.state, self.commands * self.params.omega_max, dt, self.params)
        self.on_ground = False
        if s.position[2] >= self.ground_z:
            if s.velocity[2] > self.crash_speed and self.crashed is None:
                self.crashed = f"ground contact at {s.velocity[2]:.2f} m/s"
            _, _, yaw = quat_to_euler(s.attitude)
            s.position[2] = self.ground_z
            s.velocity[:] = 0.0
            s.angular_velocity[:] = 0.0
            s.attitude = quat_from_euler(0.0, 0.0, yaw)
            self.on_ground = True
        if up_alignment(s.attitude) < 0 and self.crashed is None:
            self.crashed = "vehicle inverted"
        self.state = s


@dataclass
class TelemetryLog:
    rows: list = field(default_factory=list)

    def append(self, t, mode, pos, sp, vel, motors) -> None:
        self.rows.append((t, int(mode), *map(float, pos), *map(float, sp), *map(float, vel), *map(float, motors)))

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TELEMETRY_COLUMNS)
        for row in self.rows:
            w.writerow([repr(row[0]), row[1]] + [repr(v) for v in row[2:]])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    def array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=float).reshape(-1, len(TELEMETRY_COLUMNS))


class FlightStack:
    """Controller callback, mode logic and telemetry on top of a topic bus.

    Args:
        params: vehicle model used by the simulator.
        gains: cascade gains.
        runtime: neural runtime, or ``None`` for classical-only flights.
        rate_hz: control/tick rate.
    """

    def __init__(self, params: VehicleParams, gains: CascadeGains, runtime: InferenceRuntime | None = None,
                 rate_hz: float = 650.0, initial_state: RigidBodyState | None = None,
                 mode: FlightMode = FlightMode.Disarmed):
        self.params = params
        self.rate_hz = rate_hz
        self.dt = 1.0 / rate_hz
        self.bus = TopicBus()
        self.sim = VehicleSim(params, initial_state or RigidBodyState.at_rest())
        self.cascade = CascadeController(gains, params.gravity)
        self.cascade.reset(self.sim.state)
        self.runtime = runtime
        self.mode = FlightMode(mode)
        self.setpoint = self.sim.state.position.copy()
        self.telemetry = TelemetryLog()
        self.timeline: list = []  # (time, from, to, reason)
        self.rejections: list = []
        self.fallbacks = 0
        self.ticks = 0
        self.pending_command = None
        self.corrupt_next_attitude = False
        self.last_good = self.sim.state.copy()
        self.last_thrust_fractions = np.zeros(4)
        self.bus.schedule_on(TopicId.vehicle_angular_velocity, self._on_angular_velocity)

    @property
    def time(self) -> float:
        return self.ticks * self.dt

    @property
    def airborne(self) -> bool:
        return not self.sim.on_ground

    def command(self, cmd: Command) -> None:
        """Queue a command; it is applied at the start of the next control tick."""
        self.pending_command = cmd

    def inject_fault(self) -> None:
        """Corrupt the next published attitude with NaN."""
        self.corrupt_next_attitude = True

    def _publish_state(self, sim: VehicleSim, timestamp: int):
        s = sim.state
        attitude = s.attitude
        if self.corrupt_next_attitude:
            attitude = np.full(4, np.nan)
            self.corrupt_next_attitude = False
        return [
            TopicMessage(TopicId.vehicle_angular_velocity, timestamp, s.angular_velocity),
            TopicMessage(TopicId.vehicle_attitude, timestamp, attitude),
            TopicMessage(TopicId.vehicle_local_position, timestamp, np.concatenate([s.position, s.velocity])),
        ]

    def _state_from_bus(self, rates_msg: TopicMessage) -> RigidBodyState:
        att, _ = self.bus.read_latest(TopicId.vehicle_attitude)
        lpos, _ = self.bus.read_latest(TopicId.vehicle_local_position)
        return RigidBodyState(
            position=np.array(lpos.payload[:3]),
            velocity=np.array(lpos.payload[3:]),
            attitude=np.array(att.payload),
            angular_velocity=np.array(rates_msg.payload),
            motor_speed=self.sim.state.motor_speed.copy(),
        )

    def _set_mode(self, new: FlightMode, reason: str) -> None:
        if new != self.mode:
            self.timeline.append((self.time, self.mode.name, new.name, reason))
            if new == FlightMode.PositionMode:
                self.cascade.reset(self.last_good)
            self.mode = new

    def _cascade_commands(self, state: RigidBodyState) -> np.ndarray:
        self.last_thrust_fractions = self.cascade.update(state, self.setpoint, self.dt)
        # thrust fraction -> normalized rotor speed (thrust ~ speed^2)
        return np.sqrt(self.last_thrust_fractions)

    def controller_tick(self, state: RigidBodyState) -> np.ndarray:
        """Compute motor commands for this tick in the current mode."""
        cmd = self.pending_command
        self.pending_command = None
        if cmd is not None:
            self._set_mode(mode_switch(self.mode, cmd, self.airborne, False, self.rejections), cmd.name)

        finite = bool(np.all(state.is_finite()))
        if finite:
            self.last_good = state.copy()

        if self.mode == FlightMode.NeuralMode:
            out = None
            if self.runtime is not None:
                out = self.runtime.step(state.position, state.velocity, state.attitude,
                                        state.angular_velocity, self.setpoint)
            if out is None:
                if self.runtime is not None:
                    self.runtime.clear_fault()
                self.fallbacks += 1
                self._set_mode(mode_switch(self.mode, None, self.airborne, True), "fault")
                return self._cascade_commands(self.last_good)
            self.cascade.reset(state)
            return np.array(out, dtype=float)
        if self.mode == FlightMode.PositionMode:
            return self._cascade_commands(self.last_good)
        return np.zeros(4)

    def _on_angular_velocity(self, msg: TopicMessage) -> None:
        state = self._state_from_bus(msg)
        motors = self.controller_tick(state)
        self.bus.publish(TopicMessage(TopicId.actuator_motors, msg.timestamp, motors))
        self.sim.commands = motors
        true = self.sim.state
        self.telemetry.append(self.time, self.mode, true.position, self.setpoint, true.velocity, motors)
        self.ticks += 1

    def run(self, duration_s: float, should_stop=None) -> int:
        return run_ticks(self.bus, self.sim, self.rate_hz, duration_s, self._publish_state, should_stop)


@dataclass
class Scenario:
    """Scripted-flight settings; mirrors the keys of a scenario file."""

    neural: bool = True
    center: tuple = (0.0, 0.0, -1.5)
    side: float = 2.0
    accept_radius: float = 0.15
    dwell: float = 1.0
    leg_timeout: float = 10.0
    climb_rate: float = 0.5
    settle_time: float = 1.0
    rate_hz: float = 650.0
    max_duration: float = 200.0
    fault_at: float | None = None  # mission-relative seconds
    # campaign runs: hold the active waypoint after the fault and end the flight this long after it
    stop_after_fault: float | None = None
    seed: int = 0
    model: str | None = None
    vehicle_config: str | None = None

    @classmethod
    def from_config(cls, cfg: Mapping) -> "Scenario":
        out = cls()
        if "mode_script" in cfg:
            script = str(cfg["mode_script"])
            if script not in ("neural", "classical"):
                raise ConfigError(f"mode_script must be 'neural' or 'classical', got {script!r}")
            out.neural = script == "neural"
        for key in ("side", "accept_radius", "dwell", "leg_timeout", "climb_rate", "settle_time",
                    "rate_hz", "max_duration"):
            if key in cfg:
                setattr(out, key, float(cfg[key]))
        if "center" in cfg:
            c = tuple(float(v) for v in cfg["center"])
            if len(c) != 3:
                raise ConfigError("center needs 3 values")
            out.center = c
        for key in ("fault_at", "stop_after_fault"):
            if key in cfg:
                setattr(out, key, float(cfg[key]))
        if "seed" in cfg:
            out.seed = int(cfg["seed"])
        for key in ("model", "vehicle_config"):
            if key in cfg:
                setattr(out, key, str(cfg[key]))
        return out


@dataclass
class FlightResult:
    telemetry: TelemetryLog
    summary: dict
    failed: bool
    reason: str = ""


def _landed_tracker(stack: FlightStack, ground_z: float):
    hold = {"since": None}

    def landed() -> bool:
        s = stack.sim.state
        ok = abs(s.position[2] - ground_z) <= 0.05 and abs(s.velocity[2]) < 0.1
        if not ok:
            hold["since"] = None
            return False
        if hold["since"] is None:
            hold["since"] = stack.time
        return stack.time - hold["since"] >= 1.0 - 1e-9

    return landed


def run_flight(params: VehicleParams, gains: CascadeGains, scenario: Scenario,
               runtime: InferenceRuntime | None = None) -> FlightResult:
    """Arm, take off, (switch to neural), fly the square, land, disarm.

    All phases run in virtual time at ``scenario.rate_hz``.
    """
    if scenario.neural and runtime is None:
        raise ConfigError("neural scenario needs a model runtime")
    center = np.asarray(scenario.center, dtype=float)
    ground = np.array([center[0], center[1], 0.0])
    stack = FlightStack(params, gains, runtime if scenario.neural else None, scenario.rate_hz,
                        RigidBodyState.at_rest(ground))
    plan = square_mission(center, scenario.side, scenario.accept_radius, scenario.dwell, scenario.leg_timeout)
    mission = MissionRunner(plan)
    landed = _landed_tracker(stack, 0.0)
    phase = {"name": "arm", "t0": 0.0, "inside": None}
    failure = {"reason": ""}
    mission_start = {"t": None}
    fault_pending = {"armed": scenario.fault_at is not None}
    fault = dict(requested_tick=None, requested_at=None, fallback_tick=None, last_outside=None, errors=[])

    def phase_to(name):
        phase.update(name=name, t0=stack.time, inside=None)

    def script() -> bool:
        """Runs after every tick; sets the setpoint for the next tick."""
        t = stack.time
        pos = stack.sim.state.position
        if stack.sim.crashed:
            failure["reason"] = stack.sim.crashed
            return True
        if fault["requested_tick"] is not None:
            if fault["fallback_tick"] is None and stack.mode == FlightMode.PositionMode:
                fault["fallback_tick"] = stack.ticks
            err = float(np.linalg.norm(pos - stack.setpoint))
            fault["errors"].append(err)
            if err >= RECOVERY_RADIUS or fault["fallback_tick"] is None:
                fault["last_outside"] = t
            if scenario.stop_after_fault is not None:
                if t - fault["requested_at"] >= scenario.stop_after_fault:
                    return True
                return False
        if t >= scenario.max_duration:
            failure["reason"] = f"flight did not finish within {scenario.max_duration} s"
            return True
        name = phase["name"]
        if name == "arm":
            stack.setpoint = ground.copy()
            stack.command(Command.ARM)
            phase_to("takeoff")
        elif name == "takeoff":
            climb = min(scenario.climb_rate * (t - phase["t0"]), -center[2])
            stack.setpoint = np.array([center[0], center[1], -climb])
            if climb >= -center[2]:
                inside = np.linalg.norm(pos - center) <= scenario.accept_radius
                phase["inside"] = (phase["inside"] or t) if inside else None
                if phase["inside"] is not None and t - phase["inside"] >= scenario.settle_time:
                    if scenario.neural:
                        stack.command(Command.NEURAL)
                    phase_to("mission")
                    mission_start["t"] = t
        elif name == "mission":
            if fault_pending["armed"] and t - mission_start["t"] >= scenario.fault_at:
                stack.inject_fault()
                fault_pending["armed"] = False
                fault.update(requested_tick=stack.ticks, requested_at=t)
            sp, done = mission.tick(pos, t)
            stack.setpoint = sp
            if done:
                if stack.mode == FlightMode.NeuralMode:
                    stack.command(Command.POSITION)
                phase_to("land")
        elif name == "land":
            descent = scenario.climb_rate * (t - phase["t0"])
            z = min(center[2] + descent, 0.1)
            stack.setpoint = np.array([center[0], center[1], z])
            if landed():
                stack.command(Command.DISARM)
                phase_to("disarm")
        elif name == "disarm":
            if stack.mode == FlightMode.Disarmed:
                return True
            stack.command(Command.DISARM)
        return False

    stack.run(scenario.max_duration + 1.0, should_stop=script)
    stopped_early = scenario.stop_after_fault is not None and fault["requested_tick"] is not None
    failed = bool(failure["reason"]) or (
        not stopped_early and (stack.mode != FlightMode.Disarmed or not mission.finished))
    reason = failure["reason"] or ("" if not failed else "mission or landing incomplete")
    legs = [leg.summary(plan.dwell) for leg in mission.legs]
    steady = [leg["steady_state_error"] for leg in legs]
    summary = dict(
        scenario="neural" if scenario.neural else "classical",
        completed=not failed,
        reason=reason,
        duration=stack.time,
        ticks=stack.ticks,
        waypoints_reached=sum(1 for leg in legs if not leg["timed_out"]),
        waypoints_total=len(plan.waypoints),
        fallbacks=stack.fallbacks,
        max_steady_state_error=max(steady) if steady else float("nan"),
        legs=legs,
        mode_timeline=[dict(time=t, mode_from=a, mode_to=b, reason=r) for t, a, b, r in stack.timeline],
        rejected_commands=list(stack.rejections),
    )
    if fault["requested_tick"] is not None:
        summary["fault"] = dict(
            injected_at=fault["requested_at"],
            ticks_to_fallback=None if fault["fallback_tick"] is None
            else fault["fallback_tick"] - fault["requested_tick"],
            # from here on the error stayed inside RECOVERY_RADIUS until the flight ended
            settled_after=(fault["last_outside"] or fault["requested_at"]) - fault["requested_at"] + stack.dt,
            max_error_after=max(fault["errors"]) if fault["errors"] else float("nan"),
        )
    return FlightResult(stack.telemetry, summary, failed, reason)


@dataclass
class CampaignResult:
    injections: list  # per-run fault summaries plus crash/failure info
    settle_limit: float

    @property
    def switched_within_one_tick(self) -> int:
        return sum(1 for r in self.injections if r["ticks_to_fallback"] is not None and r["ticks_to_fallback"] <= 1)

    @property
    def recovered(self) -> int:
        return sum(1 for r in self.injections if r["recovered"])


def fault_campaign(params: VehicleParams, gains: CascadeGains, blob: bytes, n: int = 100, seed: int = 0,
                   scenario: Scenario | None = None, window: float = 4.0, settle_limit: float = 3.0,
                   budget_bytes: int | None = None) -> CampaignResult:
    """Inject a NaN attitude at ``n`` random mission times and score each recovery.

    Fault times are uniform over the duration of a clean neural mission. A run
    recovers when the error to the held waypoint stays below
    ``RECOVERY_RADIUS`` from some time no later than ``settle_limit`` after the
    fault until the end of the ``window``, without a crash.
    """
    base = scenario or Scenario()
    kwargs = {} if budget_bytes is None else {"budget_bytes": budget_bytes}
    clean = run_flight(params, gains, replace(base, neural=True, fault_at=None, stop_after_fault=None),
                       InferenceRuntime(blob, **kwargs))
    if clean.failed:
        raise FlightFailed(f"clean neural flight failed: {clean.reason}")
    timeline = clean.summary["mode_timeline"]
    t_start = next(e["time"] for e in timeline if e["mode_to"] == "NeuralMode")
    t_end = next(e["time"] for e in timeline if e["reason"] == "POSITION")
    times = np.random.default_rng(seed).uniform(0.0, t_end - t_start, n)
    out = []
    for k, fault_at in enumerate(times):
        scen = replace(base, neural=True, fault_at=float(fault_at), stop_after_fault=window)
        res = run_flight(params, gains, scen, InferenceRuntime(blob, **kwargs))
        f = dict(res.summary.get("fault") or dict(injected_at=None, ticks_to_fallback=None, settled_after=None,
                                                  max_error_after=float("nan")))
        f.update(run=k, fault_at=float(fault_at), failed=res.failed, reason=res.reason)
        f["recovered"] = (not res.failed and f["settled_after"] is not None and f["settled_after"] <= settle_limit)
        out.append(f)
    return CampaignResult(out, settle_limit)
