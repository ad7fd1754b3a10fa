"""Command line interface.

Subcommands: train, eval, render, gen-map, selfcheck, compare.  The shared
flags --seed, --steps, --episodes, --core and --attention override the
corresponding config fields.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import harness, kernels, qnet, render, selfcheck, world
from .config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    build_env,
    load_config,
)
from .missions import Mission
from .qnet import param_count
from .rng import STREAM_EVAL_EPISODE, derive_seed


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--steps", type=int, help="override trainer.total_steps")
    p.add_argument("--episodes", type=int, help="override eval_episodes")
    p.add_argument("--core", choices=qnet.CORES, help="override net.core")
    p.add_argument("--attention", choices=["on", "off"], help="override net.attention")


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    attention = None if args.attention is None else args.attention == "on"
    return apply_overrides(
        cfg,
        seed=args.seed,
        steps=args.steps,
        episodes=args.episodes,
        core=args.core,
        attention=attention,
    )


def cmd_train(args) -> int:
    cfg = _load(args)
    net_params = param_count(cfg.net)
    print(f"kernel backend: {kernels.BACKEND}")
    print(f"network: core={cfg.net.core} attention={cfg.net.attention} "
          f"trainable parameters={net_params}")
    log_path = args.log if args.log else str(Path(args.out).with_suffix("")) + "_train.csv"
    t0 = time.time()

    def progress(step: int, loss: float) -> None:
        print(f"step {step}/{cfg.trainer.total_steps} loss={loss:.5f} "
              f"elapsed={time.time() - t0:.0f}s", flush=True)

    harness.train_from_config(
        cfg,
        checkpoint_path=args.out,
        log_path=log_path,
        progress=progress if args.verbose else None,
    )
    print(f"checkpoint written to {args.out}")
    print(f"training log written to {log_path}")
    return 0


def _load_params_for(cfg: ExperimentConfig, checkpoint: str):
    params, _, _ = qnet.load_checkpoint(checkpoint)
    if params.config != cfg.net:
        mismatches = [
            f"{f.name}: checkpoint={getattr(params.config, f.name)!r} "
            f"config={getattr(cfg.net, f.name)!r}"
            for f in dataclasses.fields(cfg.net)
            if getattr(params.config, f.name) != getattr(cfg.net, f.name)
        ]
        raise ConfigError(
            "checkpoint network does not match the config: " + "; ".join(mismatches)
        )
    return params


def cmd_eval(args) -> int:
    cfg = _load(args)
    params = _load_params_for(cfg, args.checkpoint)
    report = harness.evaluate(params, cfg)
    harness.write_report_csv(args.out, report)
    if args.json:
        harness.write_report_json(args.json, report, cfg)
    cov = report.coverage_ratio_mean
    col = report.collection_ratio_mean
    print(f"episodes={report.episodes} landing_ratio={report.landing_ratio:.4f}"
          + (f" coverage_ratio={cov:.4f}" if cov is not None else "")
          + (f" collection_ratio={col:.4f}" if col is not None else ""))
    print(f"report written to {args.out}")
    return 0


def cmd_render(args) -> int:
    cfg = _load(args)
    params = _load_params_for(cfg, args.checkpoint)
    env = build_env(cfg)
    episode_seed = derive_seed(cfg.seed, STREAM_EVAL_EPISODE, args.episode)
    harness.run_episode(env, episode_seed, harness.greedy_policy(params))
    img = render.render_trajectory(
        env.map,
        env.mission.target_layer,
        env.trace,
        devices=env.mission.devices,
        scale=cfg.render_scale,
        target_scale=env.obs_params.target_scale,
    )
    render.write_ppm(args.out, img)
    m = env.metrics()
    print(f"episode seed={episode_seed} landed={m.landed} "
          f"primary_ratio={m.primary_ratio:.4f}")
    print(f"image written to {args.out}")
    return 0


def cmd_gen_map(args) -> int:
    data = json.loads(Path(args.spec).read_text()) if args.spec else {}
    allowed = {f.name for f in dataclasses.fields(world.MapGenSpec)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"gen-map spec: unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}")
    for key in ("block_size_range",):
        if key in data:
            data[key] = tuple(data[key])
    if args.seed is not None:
        data["rng_seed"] = args.seed
    spec = world.MapGenSpec(**data)
    env_map = world.generate_map(spec)
    text = world.save_map(env_map)
    if args.out:
        Path(args.out).write_text(text)
        print(f"map written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_selfcheck(args) -> int:
    results = selfcheck.run_all(fast=not args.full)
    failed = 0
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"[{status}] {r.name}: {r.detail}")
        failed += 0 if r.ok else 1
    print(f"kernel backend: {kernels.BACKEND}")
    return 1 if failed else 0


def cmd_compare(args) -> int:
    cfg = _load(args)
    missions = []
    for name in args.missions.split(","):
        missions.append(Mission(name.strip()))
    table = harness.run_comparison(
        cfg, args.out, missions=missions, progress=lambda msg: print(msg, flush=True)
    )
    print(harness.format_comparison(table))
    print(f"table written to {Path(args.out) / 'comparison.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavgrid",
        description="UAV gridworld coverage / data-harvesting simulator and DDQN learner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy and write a checkpoint")
    p.add_argument("config", nargs="?", help="experiment config JSON (defaults apply if omitted)")
    p.add_argument("--out", default="checkpoint.ckpt", help="checkpoint path")
    p.add_argument("--log", default=None,
                   help="training log CSV path (default: derived from --out)")
    p.add_argument("--verbose", action="store_true", help="print periodic progress")
    _add_override_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint over Monte Carlo scenarios")
    p.add_argument("config", nargs="?")
    p.add_argument("checkpoint")
    p.add_argument("--out", default="report.csv", help="per-episode report CSV")
    p.add_argument("--json", default=None, help="also write an aggregate JSON report")
    _add_override_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render one greedy episode to a PPM image")
    p.add_argument("config", nargs="?")
    p.add_argument("checkpoint")
    p.add_argument("out", help="output image (binary PPM)")
    p.add_argument("--episode", type=int, default=0, help="evaluation episode index")
    _add_override_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("gen-map", help="generate a random map file")
    p.add_argument("spec", nargs="?", help="JSON map-generation spec")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--out", default=None, help="output map path (stdout if omitted)")
    p.set_defaults(func=cmd_gen_map)

    p = sub.add_parser("selfcheck", help="run the built-in oracle suites")
    p.add_argument("--full", action="store_true", help="acceptance-size suites")
    p.set_defaults(func=cmd_selfcheck)

    p = sub.add_parser("compare", help="train all recurrent cores and tabulate ratios")
    p.add_argument("config", nargs="?")
    p.add_argument("--out", default="comparison", help="output directory")
    p.add_argument("--missions", default="cpp,dh", help="comma list of missions")
    _add_override_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, world.MapError, world.InfeasibleScenario) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
