import numpy as np
import pytest

from neuralfc.dynamics import RigidBodyState
from neuralfc.errors import ConfigError, ParameterError
from neuralfc.flight import (
    TELEMETRY_COLUMNS,
    Command,
    FlightMode,
    FlightStack,
    MissionRunner,
    Scenario,
    mode_switch,
    run_flight,
    square_mission,
)
from neuralfc.runtime import InferenceRuntime

M = FlightMode


def test_mode_switch_rules():
    assert mode_switch(M.NeuralMode, None, True, True) == M.PositionMode
    assert mode_switch(M.NeuralMode, Command.NEURAL, True, True) == M.PositionMode
    events = []
    assert mode_switch(M.Disarmed, Command.NEURAL, False, False, events) == M.Disarmed
    assert events and "NEURAL" in events[0]
    assert mode_switch(M.PositionMode, Command.NEURAL, True, False) == M.NeuralMode
    assert mode_switch(M.PositionMode, Command.NEURAL, False, False) == M.PositionMode
    assert mode_switch(M.Disarmed, Command.ARM, False, False) == M.PositionMode
    assert mode_switch(M.NeuralMode, Command.POSITION, True, False) == M.PositionMode
    assert mode_switch(M.PositionMode, Command.DISARM, True, False) == M.PositionMode
    assert mode_switch(M.PositionMode, Command.DISARM, False, False) == M.Disarmed
    assert mode_switch(M.NeuralMode, Command.DISARM, False, False) == M.NeuralMode


def test_square_mission_geometry():
    plan = square_mission((0, 0, -1.5), 2.0)
    assert len(plan.waypoints) == 6
    assert plan.waypoints[0] == plan.waypoints[-1] == (0, 0, -1.5)
    assert plan.waypoints[1:5] == ((1, 1, -1.5), (-1, 1, -1.5), (-1, -1, -1.5), (1, -1, -1.5))
    with pytest.raises(ParameterError):
        square_mission((0, 0, -1.5), 0.0)


def test_mission_dwell_timeout_and_finish():
    plan = square_mission((0, 0, -1.0), 2.0, accept_radius=0.1, dwell=0.5, timeout=3.0)
    run = MissionRunner(plan)
    dt = 0.01
    t = 0.0
    # sit on waypoint 0 for the dwell time
    while run.index == 0:
        run.tick(plan.waypoints[0], t)
        t += dt
    assert t == pytest.approx(0.51, abs=1e-9)
    # never reach waypoint 1: advance at timeout
    start = t
    while run.index == 1:
        run.tick((50.0, 50.0, 0.0), t)
        t += dt
    assert t - start == pytest.approx(3.01, abs=1e-6)
    assert run.legs[1].timed_out
    for k in range(2, 6):
        while run.index == k and not run.finished:
            run.tick(plan.waypoints[k], t)
            t += dt
    assert run.finished
    sp, done = run.tick((9.0, 9.0, 9.0), t)
    assert done
    np.testing.assert_array_equal(sp, plan.waypoints[-1])


def test_neural_output_is_runtime_composition(params, gains, policy_blob):
    rt = InferenceRuntime(policy_blob)
    ref = InferenceRuntime(policy_blob)
    state = RigidBodyState.hovering(params, (0.1, -0.2, -1.4))
    stack = FlightStack(params, gains, rt, initial_state=state, mode=M.NeuralMode)
    stack.sim.on_ground = False
    stack.setpoint = np.array([0.0, 0.0, -1.5])
    out = stack.controller_tick(state)
    expected = ref.postprocess(ref.infer(ref.preprocess(state.position, state.velocity, state.attitude,
                                                        state.angular_velocity, stack.setpoint)))
    np.testing.assert_array_equal(out, expected)
    assert stack.mode == M.NeuralMode


def test_position_mode_hover_equilibrium(params, gains):
    state = RigidBodyState.hovering(params, (0, 0, -1.5))
    stack = FlightStack(params, gains, initial_state=state, mode=M.PositionMode)
    stack.sim.on_ground = False
    stack.setpoint = state.position.copy()
    out = stack.controller_tick(state)
    np.testing.assert_allclose(stack.last_thrust_fractions, params.hover_throttle, atol=0.02)
    np.testing.assert_allclose(out, np.sqrt(params.hover_throttle), atol=0.02)


def test_nan_attitude_falls_back_on_same_tick(params, gains, policy_blob):
    state = RigidBodyState.hovering(params, (0, 0, -1.5))
    stack = FlightStack(params, gains, InferenceRuntime(policy_blob), initial_state=state, mode=M.NeuralMode)
    stack.sim.on_ground = False
    stack.setpoint = state.position.copy()
    stack.run(0.01)
    assert stack.mode == M.NeuralMode
    good = stack.last_good.copy()
    stack.inject_fault()
    stack.run(1 / 650)
    assert stack.mode == M.PositionMode
    assert stack.fallbacks == 1
    # published command is the cascade output on the last good state
    ref = FlightStack(params, gains, initial_state=good, mode=M.PositionMode)
    ref.cascade.reset(good)
    ref.setpoint = stack.setpoint
    expected = ref.controller_tick(good)
    np.testing.assert_allclose(stack.sim.commands, expected, rtol=1e-12)
    assert stack.telemetry.rows[-1][1] == int(M.PositionMode)


def test_telemetry_columns(params, gains):
    stack = FlightStack(params, gains)
    stack.run(0.1)
    csv = stack.telemetry.to_csv().splitlines()
    assert csv[0] == ",".join(TELEMETRY_COLUMNS)
    assert len(csv) == 1 + 65


def test_scenario_config():
    s = Scenario.from_config({"mode_script": "classical", "center": (1.0, 2.0, -2.0), "side": 1.0, "seed": 4})
    assert not s.neural and s.center == (1.0, 2.0, -2.0) and s.side == 1.0 and s.seed == 4
    with pytest.raises(ConfigError):
        Scenario.from_config({"mode_script": "acro"})
    with pytest.raises(ConfigError):
        run_flight(None, None, Scenario(neural=True))


FAST = dict(neural=False, side=1.0, dwell=0.5, settle_time=0.5, center=(0.0, 0.0, -1.0))


def test_classical_square_mission(params, gains):
    result = run_flight(params, gains, Scenario(neural=False))
    s = result.summary
    assert not result.failed, s["reason"]
    assert s["waypoints_reached"] == s["waypoints_total"] == 6
    assert all(leg["steady_state_error"] < 0.3 for leg in s["legs"])
    assert s["fallbacks"] == 0
    assert [e["mode_to"] for e in s["mode_timeline"]] == ["PositionMode", "Disarmed"]


def test_flight_telemetry_is_deterministic(params, gains):
    a = run_flight(params, gains, Scenario(**FAST)).telemetry.to_csv()
    b = run_flight(params, gains, Scenario(**FAST)).telemetry.to_csv()
    assert a == b
