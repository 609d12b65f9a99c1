"""Microcontroller-style inference runtime.

All buffers (observation, two ping-pong activation buffers, motor command
output) are allocated once in :meth:`InferenceRuntime.__init__`. ``infer``
writes through numpy ``out=`` arguments only, so steady-state calls acquire
no array memory. Faults are reported through ``runtime.fault`` rather than
raised: the flight stack reacts to them by falling back to the cascade.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .modelpack import DEFAULT_BUDGET_BYTES, RELU, TANH, footprint, load
from .observation import OBS_DIM, build_observation

LOOP_RATE_HZ = 650.0
LOOP_BUDGET_US = 1e6 / LOOP_RATE_HZ
# Cortex-M7 @ 460 MHz figures; shown for context, not reproduced here
REFERENCE_INFER_US = 93.4
REFERENCE_LOOP_US = 137.6
PHASES = ("preprocess", "infer", "postprocess", "total")


class InferenceRuntime:
    """Fixed-arena executor for one ``.nnfc`` policy.

    Args:
        blob: model bytes.
        budget_bytes: RAM budget for file + arena.

    Raises:
        FormatError, CorruptionError, BudgetError: from :func:`modelpack.load`.
    """

    def __init__(self, blob: bytes, budget_bytes: int | None = DEFAULT_BUDGET_BYTES):
        self.model, self.arena_bytes = load(blob, budget_bytes)
        self.footprint_bytes = footprint(self.model)
        self.budget_bytes = budget_bytes
        width = self.model.max_width
        self.arena = np.zeros(2 * width, dtype=np.float32)
        assert self.arena.nbytes == self.arena_bytes
        self._ping = self.arena[:width]
        self._pong = self.arena[width:]
        self._plan = []
        src = self._ping
        for k, layer in enumerate(self.model.layers):
            dst_full = self._pong if k % 2 == 0 else self._ping
            dst = dst_full[: layer.out_dim]
            self._plan.append((layer.weights, layer.bias, layer.activation, src[: layer.in_dim], dst))
            src = dst_full
        self.output = self._plan[-1][4]
        self.observation = np.zeros(OBS_DIM, dtype=np.float32)
        self.motor_commands = np.zeros(self.model.act_dim, dtype=np.float32)
        # non-finite check without temporaries: x . 0 is NaN iff any x is NaN or inf
        self._zeros = np.zeros(self.model.act_dim, dtype=np.float32)
        self._probe = np.zeros((), dtype=np.float32)
        self._relu_floor = np.float32(0.0)
        self._one = np.float32(1.0)
        self._half = np.float32(0.5)
        self.fault = False
        self.calls = 0
        self.timing_ns = {p: 0 for p in PHASES}

    def preprocess(self, position, velocity, attitude, angular_velocity, setpoint):
        """State -> observation in the runtime's float32 buffer.

        Returns ``None`` and raises the fault flag on non-finite input.
        """
        t0 = time.perf_counter_ns()
        ok = (
            np.isfinite(position).all() and np.isfinite(velocity).all() and np.isfinite(attitude).all()
            and np.isfinite(angular_velocity).all() and np.isfinite(setpoint).all()
        )
        if not ok:
            self.fault = True
            self.timing_ns["preprocess"] += time.perf_counter_ns() - t0
            return None
        build_observation(position, velocity, attitude, angular_velocity, setpoint, out=self.observation)
        self.timing_ns["preprocess"] += time.perf_counter_ns() - t0
        return self.observation

    def infer(self, observation):
        """Forward pass through the arena; returns a view of the output buffer.

        The returned array is overwritten by the next call.
        """
        t0 = time.perf_counter_ns()
        plan = self._plan
        plan[0][3][...] = observation
        for w, b, act, src, dst in plan:
            np.dot(w, src, out=dst)
            np.add(dst, b, out=dst)
            if act == RELU:
                np.maximum(dst, self._relu_floor, out=dst)
            elif act == TANH:
                np.tanh(dst, out=dst)
        out = self.output
        np.dot(out, self._zeros, out=self._probe)
        if self._probe != self._probe:
            self.fault = True
        self.calls += 1
        self.timing_ns["infer"] += time.perf_counter_ns() - t0
        return out

    def postprocess(self, action):
        """Action in [-1, 1] -> normalized rotor-speed commands in [0, 1]."""
        t0 = time.perf_counter_ns()
        out = self.motor_commands
        np.add(action, self._one, out=out)
        np.multiply(out, self._half, out=out)
        np.maximum(out, self._relu_floor, out=out)
        np.minimum(out, self._one, out=out)
        self.timing_ns["postprocess"] += time.perf_counter_ns() - t0
        return out

    def step(self, position, velocity, attitude, angular_velocity, setpoint):
        """preprocess -> infer -> postprocess; ``None`` on fault."""
        obs = self.preprocess(position, velocity, attitude, angular_velocity, setpoint)
        if obs is None:
            return None
        out = self.postprocess(self.infer(obs))
        return None if self.fault else out

    def clear_fault(self) -> None:
        self.fault = False


def postprocess(action):
    return (np.asarray(action) + 1.0) * 0.5


@dataclass
class LatencyReport:
    iterations: int
    warmup: int
    stats_us: dict  # phase -> {p50, p95, p99, max, mean}
    footprint_bytes: int
    budget_bytes: int | None
    samples_us: dict = field(repr=False, default_factory=dict)

    @property
    def budget_margin_us(self) -> float:
        return LOOP_BUDGET_US - self.stats_us["total"]["p99"]

    def table(self) -> str:
        lines = [f"{'phase':<12}{'p50 us':>10}{'p95 us':>10}{'p99 us':>10}{'max us':>10}"]
        for p in PHASES:
            s = self.stats_us[p]
            lines.append(f"{p:<12}{s['p50']:>10.2f}{s['p95']:>10.2f}{s['p99']:>10.2f}{s['max']:>10.2f}")
        lines.append(f"iterations: {self.iterations} (+{self.warmup} warm-up excluded)")
        lines.append(
            f"650 Hz tick budget: {LOOP_BUDGET_US:.2f} us, p99 total margin {self.budget_margin_us:.2f} us"
        )
        budget = "unbounded" if self.budget_bytes is None else f"{self.budget_bytes:,}"
        lines.append(f"static footprint: {self.footprint_bytes:,} / {budget} bytes")
        lines.append(
            f"reference, not reproduced: Cortex-M7 inference {REFERENCE_INFER_US} us, "
            f"full loop {REFERENCE_LOOP_US} us"
        )
        return "\n".join(lines)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["phase", "p50_us", "p95_us", "p99_us", "max_us", "mean_us", "iterations"])
            for p in PHASES:
                s = self.stats_us[p]
                w.writerow([p] + [f"{s[k]:.3f}" for k in ("p50", "p95", "p99", "max", "mean")] + [self.iterations])


def _stats(samples_ns) -> dict:
    us = np.asarray(samples_ns, dtype=np.float64) / 1e3
    p50, p95, p99 = np.percentile(us, [50, 95, 99])
    return dict(p50=float(p50), p95=float(p95), p99=float(p99), max=float(us.max()), mean=float(us.mean()))


def bench(runtime: InferenceRuntime, iterations: int = 100_000, warmup: int = 100, seed: int = 0) -> LatencyReport:
    """Per-phase latency percentiles over ``iterations`` timed control-loop calls.

    Inputs are random but finite vehicle states; the first ``warmup`` calls
    are run and discarded.
    """
    if iterations < 1000:
        raise ValueError("iterations must be >= 1000")
    rng = np.random.default_rng(seed)
    n = iterations + warmup
    pos = rng.uniform(-3, 3, (n, 3))
    vel = rng.normal(0, 1, (n, 3))
    att = rng.normal(0, 1, (n, 4))
    att /= np.linalg.norm(att, axis=1, keepdims=True)
    rates = rng.normal(0, 1, (n, 3))
    sp = np.zeros(3)
    samples = {p: np.zeros(n, dtype=np.int64) for p in PHASES}
    clock = time.perf_counter_ns
    for i in range(n):
        t0 = clock()
        obs = runtime.preprocess(pos[i], vel[i], att[i], rates[i], sp)
        t1 = clock()
        act = runtime.infer(obs)
        t2 = clock()
        runtime.postprocess(act)
        t3 = clock()
        samples["preprocess"][i] = t1 - t0
        samples["infer"][i] = t2 - t1
        samples["postprocess"][i] = t3 - t2
        samples["total"][i] = t3 - t0
    kept = {p: s[warmup:] for p, s in samples.items()}
    return LatencyReport(
        iterations=iterations,
        warmup=warmup,
        stats_us={p: _stats(s) for p, s in kept.items()},
        footprint_bytes=runtime.footprint_bytes,
        budget_bytes=runtime.budget_bytes,
        samples_us={p: s / 1e3 for p, s in kept.items()},
    )
