"""Monte Carlo evaluation, report files, and the multi-core comparison run."""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from . import qnet, trainer
from .config import ExperimentConfig, build_env, config_to_dict
from .env import Env
from .missions import Mission
from .qnet import QNetworkParams
from .rng import STREAM_EVAL_EPISODE, derive_seed
from .trainer import select_action

REPORT_HEADER = ["episode", "seed", "mission", "steps_used", "landed",
                 "coverage_ratio", "collection_ratio"]


@dataclass(frozen=True)
class EpisodeRow:
    episode: int
    seed: int
    mission: str
    steps_used: int
    landed: bool
    coverage_ratio: float | None
    collection_ratio: float | None


@dataclass(frozen=True)
class EvalReport:
    episodes: int
    landing_ratio: float
    coverage_ratio_mean: float | None
    collection_ratio_mean: float | None
    rows: tuple[EpisodeRow, ...]

    @property
    def primary_ratio_mean(self) -> float:
        if self.coverage_ratio_mean is not None:
            return self.coverage_ratio_mean
        return self.collection_ratio_mean


def greedy_policy(params: QNetworkParams) -> Callable:
    def policy(env: Env, obs) -> int:
        q = qnet.q_forward(obs, params)
        return select_action(q, env.legal_mask(), None, "greedy")

    return policy


def run_episode(env: Env, episode_seed: int, policy: Callable) -> EpisodeRow:
    obs = env.reset(episode_seed)
    while env.active:
        result = env.step(policy(env, obs))
        obs = result.obs
    m = env.metrics()
    return EpisodeRow(
        episode=0,
        seed=episode_seed,
        mission=m.mission.value,
        steps_used=env.steps_used,
        landed=m.landed,
        coverage_ratio=m.coverage_ratio,
        collection_ratio=m.collection_ratio,
    )


def evaluate(
    params: QNetworkParams | None,
    cfg: ExperimentConfig,
    env: Env | None = None,
    episodes: int | None = None,
    policy: Callable | None = None,
    seed_stream: int = STREAM_EVAL_EPISODE,
) -> EvalReport:
    """Greedy Monte Carlo evaluation over freshly generated scenarios.

    Episode seeds derive from the config seed, so a (params, config) pair
    always produces the identical report.  ``policy`` overrides the default
    greedy policy (used by scripted-policy tests).
    """
    if env is None:
        env = build_env(cfg)
    if policy is None:
        if params is None:
            raise ValueError("evaluate needs params unless a policy is given")
        policy = greedy_policy(params)
    n = cfg.eval_episodes if episodes is None else episodes
    rows = []
    for ep in range(n):
        ep_seed = derive_seed(cfg.seed, seed_stream, ep)
        row = run_episode(env, ep_seed, policy)
        rows.append(replace(row, episode=ep))
    landing = sum(r.landed for r in rows) / n
    coverage = [r.coverage_ratio for r in rows if r.coverage_ratio is not None]
    collection = [r.collection_ratio for r in rows if r.collection_ratio is not None]
    return EvalReport(
        episodes=n,
        landing_ratio=landing,
        coverage_ratio_mean=statistics.fmean(coverage) if coverage else None,
        collection_ratio_mean=statistics.fmean(collection) if collection else None,
        rows=tuple(rows),
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_report_csv(path: str | Path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for r in report.rows:
            writer.writerow([
                r.episode, r.seed, r.mission, r.steps_used,
                _fmt(r.landed), _fmt(r.coverage_ratio), _fmt(r.collection_ratio),
            ])


def write_report_json(path: str | Path, report: EvalReport, cfg: ExperimentConfig) -> None:
    doc = {
        "config": config_to_dict(cfg),
        "episodes": report.episodes,
        "landing_ratio": report.landing_ratio,
        "coverage_ratio_mean": report.coverage_ratio_mean,
        "collection_ratio_mean": report.collection_ratio_mean,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def train_from_config(
    cfg: ExperimentConfig,
    checkpoint_path: str | Path | None = None,
    log_path: str | Path | None = None,
    progress: Callable[[int, float], None] | None = None,
) -> tuple[QNetworkParams, list[trainer.LogRow]]:
    """Train per config; optionally write the checkpoint and training log."""
    env_map = None

    def factory() -> Env:
        return build_env(cfg, env_map)

    eval_fn = None
    if cfg.trainer.eval_interval > 0:
        eval_env = build_env(cfg)

        def eval_fn(params: QNetworkParams, step: int) -> tuple[float, float]:
            report = evaluate(
                params, cfg, env=eval_env, episodes=cfg.trainer.eval_episodes
            )
            return report.landing_ratio, report.primary_ratio_mean

    params, rows = trainer.run_training(
        factory, cfg.net, cfg.trainer, cfg.seed, eval_fn=eval_fn, progress=progress
    )
    if checkpoint_path is not None:
        qnet.save_checkpoint(str(checkpoint_path), params, config_to_dict(cfg), cfg.seed)
    if log_path is not None:
        trainer.write_log(str(log_path), rows)
    return params, rows


COMPARISON_HEADER = ["core", "attention", "mission", "landing_ratio",
                     "coverage_ratio", "collection_ratio"]


def run_comparison(
    cfg: ExperimentConfig,
    out_dir: str | Path,
    missions: Sequence[Mission] = (Mission.CPP, Mission.DH),
    cores: Sequence[str] = qnet.CORES,
    progress: Callable[[str], None] | None = None,
) -> list[dict]:
    """Train every recurrent core on every mission and tabulate the ratios.

    Writes one checkpoint, log and report per run plus ``comparison.csv``
    into out_dir; returns the table rows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = []
    for mission in missions:
        for core in cores:
            run_cfg = replace(
                cfg,
                scenario=replace(cfg.scenario, mission=mission),
                net=replace(cfg.net, core=core),
            )
            tag = f"{mission.value}_{core}"
            if progress is not None:
                progress(f"training {tag} ({run_cfg.trainer.total_steps} steps)")
            params, _ = train_from_config(
                run_cfg,
                checkpoint_path=out / f"{tag}.ckpt",
                log_path=out / f"{tag}_train.csv",
            )
            report = evaluate(params, run_cfg)
            write_report_csv(out / f"{tag}_eval.csv", report)
            table.append({
                "core": core,
                "attention": run_cfg.net.attention,
                "mission": mission.value,
                "landing_ratio": report.landing_ratio,
                "coverage_ratio": report.coverage_ratio_mean,
                "collection_ratio": report.collection_ratio_mean,
            })
    with open(out / "comparison.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_HEADER)
        for row in table:
            writer.writerow([
                row["core"], _fmt(row["attention"]), row["mission"],
                _fmt(row["landing_ratio"]), _fmt(row["coverage_ratio"]),
                _fmt(row["collection_ratio"]),
            ])
    return table


def format_comparison(table: list[dict]) -> str:
    header = f"{'core':<8} {'attn':<5} {'mission':<8} {'landing':>8} {'coverage':>9} {'collection':>11}"
    lines = [header]
    for row in table:
        cov = "-" if row["coverage_ratio"] is None else f"{row['coverage_ratio']:.3f}"
        col = "-" if row["collection_ratio"] is None else f"{row['collection_ratio']:.3f}"
        attn = "on" if row["attention"] else "off"
        lines.append(
            f"{row['core']:<8} {attn:<5} {row['mission']:<8} "
            f"{row['landing_ratio']:>8.3f} {cov:>9} {col:>11}"
        )
    return "\n".join(lines)
