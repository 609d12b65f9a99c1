"""Command-line entry point: ``neuralfc {sysid,train,fly,bench,report}``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__, modelpack
from .cascade import CascadeGains
from .config import default_config, default_config_path, load_config, require, update_config_file
from .dynamics import VehicleParams, compute_thrust_coefficient
from .errors import ConfigError, FlightFailed, NeuralFCError
from .flight import Scenario, run_flight
from .rl.train import EVAL_SEED_OFFSET, TrainSettings, evaluate, train, write_curve
from .runtime import InferenceRuntime, bench

MANIFEST = "manifest.json"


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class RunManifest:
    """``manifest.json`` in an output directory; written before any output."""

    def __init__(self, out_dir: Path, command: str, configs: dict, seed):
        self.path = Path(out_dir) / MANIFEST
        self.data = dict(
            command=command,
            configs={k: str(v) for k, v in configs.items() if v is not None},
            seed=seed,
            output_dir=str(out_dir),
            tool_version=__version__,
            artifacts={},
        )
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        self.write()

    def add(self, *paths: Path) -> None:
        for p in paths:
            self.data["artifacts"][Path(p).name] = sha256_file(p)
        self.write()

    def write(self) -> None:
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def _vehicle(path):
    cfg = load_config(path) if path else default_config()
    params = VehicleParams.from_config(cfg)
    return cfg, params, CascadeGains.from_config(cfg, params)


def cmd_sysid(args) -> int:
    path = Path(args.config)
    cfg = load_config(path)
    require(cfg, "mass", "hover_speed")
    mass = float(cfg["mass"])
    hover = float(cfg["hover_speed"])
    g = float(cfg.get("gravity", 9.81))
    k = compute_thrust_coefficient(mass, hover, g)
    omega_max = float(cfg.get("omega_max", VehicleParams.omega_max))
    hover_throttle = (hover / omega_max) ** 2
    update_config_file(path, {"k_thrust": k, "hover_throttle": hover_throttle})
    print(f"k_thrust = {k:.6g} N s^2/rad^2")
    print(f"hover_throttle = {hover_throttle:.6g}")
    print(f"balance: 4 * k * w_h^2 = {4 * k * hover**2:.6f} N, m * g = {mass * g:.6f} N")
    return 0


def cmd_train(args) -> int:
    out = Path(args.out)
    train_cfg_path = args.train_config or default_config_path("training.cfg")
    manifest = RunManifest(out, "train", {"vehicle": args.config or default_config_path(), "training": train_cfg_path},
                           args.seed)
    _, params, _ = _vehicle(args.config)
    cfg = load_config(train_cfg_path)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.updates is not None:
        cfg["total_updates"] = args.updates
    settings = TrainSettings.from_config(cfg)
    manifest.data["seed"] = settings.ppo.seed
    manifest.write()

    result = train(params, settings)
    policy_path, critic_path = out / "policy.nnfc", out / "critic.nncr"
    curve_path, eval_path = out / "training_curve.csv", out / "eval.csv"
    modelpack.save(modelpack.export(result.best_policy), policy_path)
    modelpack.save(modelpack.export_critic(result.model.critic), critic_path)
    write_curve(result.curve, curve_path)
    err, per_episode = evaluate(result.best_policy, params, settings.episode, settings.weights,
                                settings.eval_episodes, seed=settings.ppo.seed + EVAL_SEED_OFFSET)
    with open(eval_path, "w") as fh:
        fh.write("episode,final_pos_error\n")
        fh.writelines(f"{i},{e!r}\n" for i, e in enumerate(per_episode.tolist()))
    manifest.add(policy_path, critic_path, curve_path, eval_path)
    print(f"best eval final position error {result.best_eval_error:.4f} m at update {result.best_update}")
    print(f"wrote {policy_path}")
    return 0


def _runtime(model_path, budget):
    if model_path is None:
        raise ConfigError("--model is required")
    return InferenceRuntime(modelpack.read(model_path), budget)


def cmd_fly(args) -> int:
    out = Path(args.out)
    scen_cfg = load_config(args.scenario) if args.scenario else {}
    scenario = Scenario.from_config(scen_cfg)
    if args.seed is not None:
        scenario.seed = args.seed
    model = args.model or scenario.model
    vehicle = args.config or scenario.vehicle_config
    manifest = RunManifest(out, "fly", {"scenario": args.scenario, "vehicle": vehicle or default_config_path(),
                                        "model": model}, scenario.seed)
    _, params, gains = _vehicle(vehicle)
    runtime = _runtime(model, args.budget_bytes) if scenario.neural else None
    result = run_flight(params, gains, scenario, runtime)
    tele_path, summary_path = out / "telemetry.csv", out / "summary.json"
    result.telemetry.write_csv(tele_path)
    summary_path.write_text(json.dumps(result.summary, indent=2) + "\n")
    manifest.add(tele_path, summary_path)
    s = result.summary
    print(f"{s['scenario']} flight: {'completed' if s['completed'] else 'FAILED: ' + s['reason']}")
    for leg in s["legs"]:
        print(f"  waypoint {leg['waypoint']} {leg['target']}: steady-state {leg['steady_state_error']:.3f} m, "
              f"max {leg['max_error']:.3f} m{' (timeout)' if leg['timed_out'] else ''}")
    for ev in s["mode_timeline"]:
        print(f"  t={ev['time']:.3f}s {ev['mode_from']} -> {ev['mode_to']} ({ev['reason']})")
    if result.failed:
        raise FlightFailed(result.reason)
    return 0


def cmd_bench(args) -> int:
    runtime = _runtime(args.model, args.budget_bytes)
    report = bench(runtime, iterations=args.iterations)
    print(report.table())
    if args.out:
        out = Path(args.out)
        manifest = RunManifest(out, "bench", {"model": args.model}, None)
        path = out / "latency.csv"
        report.write_csv(path)
        manifest.add(path)
    return 0


def cmd_report(args) -> int:
    from .report import render_report

    out = Path(args.out)
    manifest = RunManifest(out, "report", {f"telemetry_{i}": p for i, p in enumerate(args.telemetry)}, None)
    paths = render_report(args.telemetry, out)
    for p in paths:
        print(f"wrote {p}")
    manifest.data["figures"] = [Path(p).name for p in paths]
    manifest.write()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neuralfc", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sysid", help="derive k_thrust from hover speed and write it back to the config")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_sysid)

    s = sub.add_parser("train", help="train a policy with PPO and export it")
    s.add_argument("--config", help="vehicle config (default: packaged)")
    s.add_argument("--train-config", help="training config (default: packaged)")
    s.add_argument("--seed", type=int)
    s.add_argument("--updates", type=int, help="override total_updates")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("fly", help="run a scripted flight in the simulated flight stack")
    s.add_argument("--scenario")
    s.add_argument("--model")
    s.add_argument("--config", help="vehicle config (default: scenario's or packaged)")
    s.add_argument("--seed", type=int)
    s.add_argument("--budget-bytes", type=int, default=modelpack.DEFAULT_BUDGET_BYTES)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fly)

    s = sub.add_parser("bench", help="latency percentiles of the deployed control loop")
    s.add_argument("--model", required=True)
    s.add_argument("--iterations", type=int, default=100_000)
    s.add_argument("--budget-bytes", type=int, default=modelpack.DEFAULT_BUDGET_BYTES)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("report", help="plot one or two telemetry CSVs")
    s.add_argument("telemetry", nargs="+")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except NeuralFCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
