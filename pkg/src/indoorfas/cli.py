"""Command-line experiments: ``indoorfas <command> --config cfg.json [--seed N] [--workers N] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 infeasible scenario, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from indoorfas.channel import Polarization, RadioParams, channel_coefficient, trace_rays
from indoorfas.errors import DomainError, GeometryError, LayoutError
from indoorfas.geometry import (
    BUILTIN_LAYOUTS,
    FasLine,
    Layout,
    Point,
    builtin_layout,
    layout_from_dict,
    load_layout,
    theta_to_position,
)
from indoorfas.optim import FasConstraints, grid_search_positions, wmmse_fixed_positions
from indoorfas.radiomap import average_rate, map_metrics, path_loss_map, save_binary, save_csv
from indoorfas.rl.config import TrainConfig
from indoorfas.rl.env import FasEnv
from indoorfas.rl.grpo import grpo_train
from indoorfas.rl.log import TrainingLog, save_checkpoint
from indoorfas.rl.ppo import TrainingDiverged, ppo_init
from indoorfas.tworay import TwoRayInstance, exhaustive_search, solve_closed_form

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class NumericFailure(RuntimeError):
    pass


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


# ------------------------------------------------------------ configuration


@dataclass(frozen=True)
class ExperimentConfig:
    layout: Layout
    radio: RadioParams
    fas_y: float = 0.5
    tx: Point | None = None
    rxs: tuple[Point, ...] = (Point(1.25, 1.25), Point(4.25, 3.0))
    n_antennas: int = 2
    constraints: FasConstraints | None = None
    frequencies: tuple[float, ...] = ()
    tworay_wall: int = 0
    tworay_power: float = 1.0
    grid_points: int = 4000
    resolution: float = 0.05
    oracle_order: int = 3
    grid_spacing: float = 0.03
    grid_count: int = 26
    fp_samples: int = 200
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: Path = Path("out")
    seed: int = 0

    @property
    def fas(self) -> FasLine:
        return FasLine(self.fas_y, self.rxs[0])


def _point(value, name: str) -> Point:
    if not (isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value)):
        raise ConfigError(f"{name} must be an [x, y] pair of numbers")
    return Point(float(value[0]), float(value[1]))


def _section(doc: dict, name: str, allowed: set[str]) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    return sec


def _layout(spec, base: Path) -> Layout:
    if isinstance(spec, dict):
        return layout_from_dict(spec)
    if not isinstance(spec, str):
        raise ConfigError("'layout' must be a builtin name, a file path or an inline object")
    if spec in BUILTIN_LAYOUTS:
        return builtin_layout(spec)
    path = Path(spec)
    if not path.is_absolute():
        path = base / path
    return load_layout(path)


def parse_config(doc: dict, base: Path = Path(".")) -> ExperimentConfig:
    """Validate a configuration document; every field has a default."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    top = {
        "schema_version", "layout", "radio", "scenario", "constraints", "tworay", "radiomap", "optimize",
        "train", "output_dir", "seed",
    }
    unknown = set(doc) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    layout = _layout(doc.get("layout", "rectangle5"), base)

    radio = _section(doc, "radio", {"frequency", "noise_dbm", "noise_watts", "gt", "gr", "polarization"})
    if "noise_dbm" in radio and "noise_watts" in radio:
        raise ConfigError("give either radio.noise_dbm or radio.noise_watts, not both")
    noise = dbm_to_watts(radio["noise_dbm"]) if "noise_dbm" in radio else radio.get("noise_watts", 1e-12)
    try:
        params = RadioParams(
            frequency=float(radio.get("frequency", 5e9)),
            gt=float(radio.get("gt", 1.0)),
            gr=float(radio.get("gr", 1.0)),
            noise_power=float(noise),
            polarization=Polarization(radio.get("polarization", "TE")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"radio: {exc}") from exc

    scen = _section(doc, "scenario", {"fas_y", "tx", "rxs", "n_antennas"})
    rxs = tuple(_point(r, "scenario.rxs[]") for r in scen.get("rxs", [[1.25, 1.25], [4.25, 3.0]]))
    if not rxs:
        raise ConfigError("scenario.rxs must list at least one receiver")
    n_antennas = int(scen.get("n_antennas", max(2, len(rxs))))
    if len(rxs) > n_antennas:
        raise ConfigError(f"need K <= N, got K={len(rxs)} receivers and N={n_antennas} antennas")
    fas_y = float(scen.get("fas_y", 0.5))
    tx = _point(scen["tx"], "scenario.tx") if "tx" in scen else None

    cons = _section(doc, "constraints", {"theta_l", "theta_r", "delta", "p_max", "angle_unit"})
    unit = cons.get("angle_unit", "pi")
    if unit not in ("pi", "rad"):
        raise ConfigError("constraints.angle_unit must be 'pi' or 'rad'")
    scale = math.pi if unit == "pi" else 1.0
    constraints = None
    if "theta_l" in cons or "theta_r" in cons:
        try:
            constraints = FasConstraints(
                float(cons["theta_l"]) * scale,
                float(cons["theta_r"]) * scale,
                float(cons.get("delta", 0.0)) * scale,
                float(cons.get("p_max", 1.0)),
            )
        except KeyError as exc:
            raise ConfigError(f"constraints needs both theta_l and theta_r (missing {exc})") from exc
        except DomainError as exc:
            raise ConfigError(f"constraints: {exc}") from exc

    tw = _section(doc, "tworay", {"wall", "power", "grid_points", "frequencies"})
    rm = _section(doc, "radiomap", {"resolution", "oracle_order"})
    op = _section(doc, "optimize", {"grid_spacing", "grid_count", "samples"})
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    train_doc = dict(doc.get("train", {}))
    train_doc.setdefault("seed", seed)
    try:
        train = TrainConfig.from_dict(train_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train: {exc}") from exc
    return ExperimentConfig(
        layout=layout,
        radio=params,
        fas_y=fas_y,
        tx=tx,
        rxs=rxs,
        n_antennas=n_antennas,
        constraints=constraints,
        frequencies=tuple(float(f) for f in tw.get("frequencies", [])),
        tworay_wall=int(tw.get("wall", 0)),
        tworay_power=float(tw.get("power", 1.0)),
        grid_points=int(tw.get("grid_points", 4000)),
        resolution=float(rm.get("resolution", 0.05)),
        oracle_order=int(rm.get("oracle_order", 3)),
        grid_spacing=float(op.get("grid_spacing", 0.03)),
        grid_count=int(op.get("grid_count", 26)),
        fp_samples=int(op.get("samples", 200)),
        train=train,
        output_dir=Path(doc.get("output_dir", "out")),
        seed=seed,
    )


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return parse_config({})
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return parse_config(doc, path.parent)


# ------------------------------------------------------------ helpers


def _complex(z: complex) -> list[float]:
    return [z.real, z.imag]


def _emit(record: dict, out: Path | None, name: str) -> None:
    text = json.dumps(record, indent=2, sort_keys=True)
    print(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text + "\n")


def _require_constraints(cfg: ExperimentConfig) -> FasConstraints:
    if cfg.constraints is None:
        raise ConfigError("this command needs constraints.theta_l and constraints.theta_r")
    return cfg.constraints


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericFailure(f"{what} is not finite")
    return value


# ------------------------------------------------------------ commands


def trace_report(layout: Layout, params: RadioParams, tx: Point, rx: Point) -> dict:
    trace = trace_rays(layout, params, tx, rx)
    rays = []
    for ray in trace.rays:
        rays.append(
            {
                "wall": ray.wall,
                "present": ray.present,
                "length": ray.length,
                "reflection_point": list(ray.reflection_point) if ray.reflection_point is not None else None,
                "incidence_angle": ray.incidence_angle,
                "gamma": ray.gamma,
                "value": _complex(ray.value),
            }
        )
    return {
        "tx": list(tx),
        "rx": list(rx),
        "indicators": {"walls": list(trace.indicators.wall_nlos), "los": trace.indicators.los},
        "rays": rays,
        "coefficient": _complex(trace.coefficient),
    }


def cmd_trace(cfg: ExperimentConfig, args) -> dict:
    tx = Point(*args.tx) if args.tx else cfg.tx
    rx = Point(*args.rx) if args.rx else cfg.rxs[0]
    if tx is None:
        raise ConfigError("trace needs a transmitter: scenario.tx or --tx X Y")
    for name, p in (("tx", tx), ("rx", rx)):
        if not cfg.layout.contains(p):
            raise DomainError(f"{name} {tuple(p)} is not inside the layout")
    return trace_report(cfg.layout, cfg.radio, tx, rx)


def _tworay_instance(cfg: ExperimentConfig, params: RadioParams, rx: Point) -> TwoRayInstance:
    c = _require_constraints(cfg)
    walls = cfg.layout.walls
    if not 0 <= cfg.tworay_wall < len(walls):
        raise ConfigError(f"tworay.wall {cfg.tworay_wall} out of range (layout has {len(walls)} walls)")
    wall = walls[cfg.tworay_wall]
    if not wall.vertical:
        raise DomainError("the two-ray solver needs a wall perpendicular to the x-axis")
    x1 = rx.x - wall.coord
    if x1 <= 0:
        raise DomainError("the receiver must lie to the right of the two-ray wall")
    return TwoRayInstance(x1, rx.y, cfg.fas_y, wall.permittivity, params, c.theta_l, c.theta_r, cfg.tworay_power)


def cmd_tworay_solve(cfg: ExperimentConfig, args) -> dict:
    results = []
    rx = cfg.rxs[0]
    fas = cfg.fas
    for freq in cfg.frequencies or (cfg.radio.frequency,):
        params = replace(cfg.radio, frequency=freq)
        inst = _tworay_instance(cfg, params, rx)
        closed = solve_closed_form(inst)
        oracle = exhaustive_search(inst, cfg.grid_points)
        # the same angle evaluated on the whole layout (every first-order ray)
        tx = theta_to_position(closed.theta_star, fas)
        h_full = channel_coefficient(cfg.layout, params, tx, rx)
        full_rate = math.log2(1 + cfg.tworay_power * abs(h_full) ** 2 / params.noise_power)
        results.append(
            {
                "frequency": freq,
                "case": closed.case_id.value,
                "theta_star": closed.theta_star,
                "theta_star_over_pi": closed.theta_star / math.pi,
                "snr": _finite(closed.snr, "closed-form SNR"),
                "rate_two_ray": closed.rate,
                "rate_full_layout": _finite(full_rate, "full-layout rate"),
                "candidates": [[t, s] for t, s in closed.candidates],
                "notes": list(closed.notes),
                "oracle_theta_star": oracle.theta_star,
                "oracle_theta_star_over_pi": oracle.theta_star / math.pi,
                "oracle_rate": oracle.rate,
                "rate_gap": oracle.rate - closed.rate,
                "rate_ratio": closed.rate / oracle.rate if oracle.rate > 0 else 1.0,
                "antenna_position": list(tx),
            }
        )
    return {"rx": list(rx), "fas_y": cfg.fas_y, "results": results}


def cmd_radiomap(cfg: ExperimentConfig, args) -> dict:
    tx = Point(*args.tx) if args.tx else cfg.tx
    if tx is None:
        raise ConfigError("radiomap needs a transmitter: scenario.tx or --tx X Y")
    resolution = args.resolution or cfg.resolution
    order = cfg.oracle_order if args.order is None else args.order
    model = path_loss_map(cfg.layout, cfg.radio, tx, resolution, workers=args.workers)
    if args.self_compare:
        oracle = model
    else:
        oracle = path_loss_map(cfg.layout, cfg.radio, tx, resolution, max_order=order, workers=args.workers)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    save_csv(model, out / "model_map.csv")
    save_binary(model, out / "model_map.bin")
    save_csv(oracle, out / "oracle_map.csv")
    save_binary(oracle, out / "oracle_map.bin")
    metrics = map_metrics(model, oracle)
    p = cfg.constraints.p_max if cfg.constraints is not None else 1.0
    rate_model = average_rate(model, cfg.radio, p)
    rate_oracle = average_rate(oracle, cfg.radio, p)
    return {
        "tx": list(tx),
        "resolution": resolution,
        "oracle_order": None if args.self_compare else order,
        **metrics.to_dict(),
        "average_rate_model": rate_model,
        "average_rate_oracle": rate_oracle,
        "average_rate_gap": abs(rate_model - rate_oracle),
    }


def _env(cfg: ExperimentConfig) -> FasEnv:
    return FasEnv(cfg.layout, cfg.radio, cfg.rxs, cfg.n_antennas, _require_constraints(cfg), cfg.fas)


def cmd_optimize(cfg: ExperimentConfig, args) -> dict:
    c = _require_constraints(cfg)
    record: dict[str, Any] = {}
    if args.method in ("gs", "both"):
        gs = grid_search_positions(
            cfg.layout, cfg.radio, cfg.rxs, cfg.n_antennas, c, cfg.fas, cfg.grid_spacing, cfg.grid_count,
            workers=args.workers,
        )
        record["wmmse_gs"] = {
            "combinations": gs.evaluated,
            "positions": [list(p) for p in gs.positions],
            "thetas": list(gs.thetas),
            "beams": [[_complex(complex(z)) for z in row] for row in gs.beams.vectors],
            "power": gs.beams.power,
            "sum_rate": _finite(gs.sum_rate, "grid-search sum-rate"),
        }
    if args.method in ("fp", "both"):
        fp = wmmse_fixed_positions(
            cfg.layout, cfg.radio, cfg.rxs, cfg.n_antennas, c, cfg.fas, cfg.fp_samples, seed=cfg.seed
        )
        record["wmmse_fp"] = {"samples": len(fp.rates), "mean_sum_rate": _finite(fp.mean_sum_rate, "sum-rate")}
    return record


def cmd_train(cfg: ExperimentConfig, args) -> dict:
    env = _env(cfg)
    tc = cfg.train
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    log = TrainingLog(out / "train_log.jsonl", timing=not args.no_timing)
    c = _require_constraints(cfg)
    if args.baseline == "wmmse-gs":
        gs = grid_search_positions(
            cfg.layout, cfg.radio, cfg.rxs, cfg.n_antennas, c, cfg.fas, cfg.grid_spacing, cfg.grid_count,
            workers=args.workers,
        )
        log.append({"iteration": 0, "group_mean": gs.sum_rate, "group_max": gs.sum_rate, "kl_mean": None,
                    "combinations": gs.evaluated})
        return {"baseline": "wmmse-gs", "sum_rate": gs.sum_rate, "combinations": gs.evaluated}
    if args.baseline == "wmmse-fp":
        fp = wmmse_fixed_positions(cfg.layout, cfg.radio, cfg.rxs, cfg.n_antennas, c, cfg.fas, cfg.fp_samples,
                                   seed=cfg.seed)
        log.append({"iteration": 0, "group_mean": fp.mean_sum_rate, "group_max": float(max(fp.rates)),
                    "kl_mean": None})
        return {"baseline": "wmmse-fp", "mean_sum_rate": fp.mean_sum_rate, "samples": len(fp.rates)}
    ppo_log = TrainingLog(out / "ppo_log.jsonl", timing=not args.no_timing)
    ppo = ppo_init(env, tc, log=ppo_log)
    if args.baseline == "ppo":
        for rec in ppo.records:
            log.append({"iteration": rec["update"], "group_mean": rec["reward_mean"],
                        "group_max": rec["reward_max"], "kl_mean": None})
        save_checkpoint(out / "checkpoint.pt", ppo.actor, tc, critic=ppo.critic)
        return {"baseline": "ppo", "steps": ppo.steps, "updates": len(ppo.records)}
    result = grpo_train(env, tc, reference=ppo.actor, log=log)
    for rec in result.records:
        if not all(math.isfinite(rec[k]) for k in ("group_mean", "group_max")):
            raise NumericFailure(f"non-finite reward at iteration {rec['iteration']}")
    save_checkpoint(out / "checkpoint.pt", result.policy, tc, extra={"ppo_steps": ppo.steps})
    maxima = [r["group_max"] for r in result.records]
    return {
        "ppo_steps": ppo.steps,
        "grpo_iterations": len(result.records),
        "final_group_max": maxima[-1] if maxima else None,
        "best_group_max": max(maxima) if maxima else None,
        "skipped_updates": result.skipped_updates,
    }


COMMANDS = {
    "trace": (cmd_trace, "trace.json"),
    "tworay-solve": (cmd_tworay_solve, "tworay.json"),
    "radiomap": (cmd_radiomap, "radiomap_metrics.json"),
    "optimize": (cmd_optimize, "optimize.json"),
    "train": (cmd_train, "train_summary.json"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed; overrides the config")
    common.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    common.add_argument("--out", type=Path, help="output directory; overrides the config")

    parser = argparse.ArgumentParser(prog="indoorfas", description="Indoor fluid-antenna channel modelling and optimization")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("trace", parents=[common], help="per-ray breakdown of one Tx-Rx channel")
    p.add_argument("--tx", type=float, nargs=2, metavar=("X", "Y"))
    p.add_argument("--rx", type=float, nargs=2, metavar=("X", "Y"))
    sub.add_parser("tworay-solve", parents=[common], help="closed-form antenna angle vs exhaustive search")
    p = sub.add_parser("radiomap", parents=[common], help="model and reference path-loss maps with metrics")
    p.add_argument("--tx", type=float, nargs=2, metavar=("X", "Y"))
    p.add_argument("--resolution", type=float)
    p.add_argument("--order", type=int, help="reflection order of the reference map")
    p.add_argument("--self-compare", action="store_true", help="compare the model map with itself")
    p = sub.add_parser("optimize", parents=[common], help="WMMSE grid-search and fixed-position baselines")
    p.add_argument("--method", choices=("gs", "fp", "both"), default="both")
    p = sub.add_parser("train", parents=[common], help="PPO reference followed by GRPO training")
    p.add_argument("--baseline", choices=("ppo", "wmmse-fp", "wmmse-gs"))
    p.add_argument("--no-timing", action="store_true", help="write null wall_clock fields (byte-reproducible logs)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg = replace(cfg, seed=args.seed, train=replace(cfg.train, seed=args.seed))
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        args.out = args.out if args.out is not None else cfg.output_dir
        np.seterr(all="ignore")
        handler, name = COMMANDS[args.command]
        record = handler(cfg, args)
        _emit(record, args.out, name)
        return EXIT_OK
    except (ConfigError, LayoutError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, GeometryError) as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericFailure, TrainingDiverged, FloatingPointError, OverflowError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
