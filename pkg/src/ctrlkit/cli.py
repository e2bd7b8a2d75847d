"""Command-line entry point.

Subcommands: bench (sampling throughput), train (policy gradient),
mpc (receding-horizon episodes), replay (checkpoint rollout to a
trajectory file), serve (live control-loop service).

Configuration comes from an optional JSON file plus flags; flags win.
Every run derives its subsystem seeds from the single --seed by labeled
hashing, and every artifact-producing run writes a config snapshot that
reproduces it.
"""

from __future__ import annotations

import dataclasses
import json
import time
import zlib
from pathlib import Path

import click
import numpy as np

from ctrlkit.configio import (
    ConfigError,
    dataclass_from_dict,
    dump_json_file,
    load_json_file,
    merge_overrides,
)
from ctrlkit.envs import REGISTRY, env_names
from ctrlkit.envs.task import EPISODE_LEN
from ctrlkit import npg as npg_mod
from ctrlkit.mppi import (
    MppiConfig,
    MppiController,
    diagnostics_to_csv,
    run_episodes,
)
from ctrlkit.neural import load_policy, load_value
from ctrlkit.sampler import benchmark_throughput, rollout, trajectory_rng

BENCH_CSV_HEADER = (
    "workers,samples_per_sec,speedup,efficiency,wall_s,jitter_max_s,jitter_p99_s"
)

SERVE_DEFAULT_MPPI = MppiConfig(H=12, K=16, sigma=0.3, temperature=0.05)


def subsystem_seed(seed: int, label: str) -> int:
    """Child seed for one subsystem, derived from the run seed by
    hashing the subsystem label."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(label.encode("ascii"))])
    return int(ss.generate_state(1)[0])


def success_ci(successes: int, total: int) -> tuple:
    """Normal-approximation 95% interval for a success rate, in percent,
    clamped to [0, 100]."""
    p = successes / total
    half = 1.96 * np.sqrt(p * (1.0 - p) / total)
    return (max(0.0, p - half) * 100.0, min(1.0, p + half) * 100.0)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: which env, which algorithm section, one seed."""

    env: str = "cartpole"
    env_overrides: dict = dataclasses.field(default_factory=dict)
    algo: str = "npg"
    npg: dict = dataclasses.field(default_factory=dict)
    mppi: dict = dataclasses.field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.algo not in ("npg", "mppi"):
            raise ConfigError(f"algo must be 'npg' or 'mppi', got {self.algo!r}")


def load_experiment(config_path, **flag_overrides) -> ExperimentConfig:
    """Merge a JSON config file (optional) with flag overrides (flags
    win; None flags mean unset) into a validated ExperimentConfig."""
    data = load_json_file(config_path) if config_path else {}
    flags = {k: v for k, v in flag_overrides.items() if v is not None}
    merged = merge_overrides(data, flags)
    cfg = dataclass_from_dict(ExperimentConfig, merged)
    resolve_env(cfg.env)
    build_env_config(cfg.env, cfg.env_overrides)
    if cfg.npg:
        build_npg_config(cfg)
    if cfg.mppi:
        build_mppi_section(cfg)
    return cfg


def resolve_env(name):
    if name not in REGISTRY:
        raise click.UsageError(
            f"unknown env '{name}'; available: {', '.join(env_names())}"
        )
    return REGISTRY[name]


def build_env_config(name, overrides):
    _, cfg_cls = resolve_env(name)
    try:
        return dataclass_from_dict(cfg_cls, dict(overrides), path=f"env_overrides[{name}]")
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


def build_env_factory(name, overrides):
    env_cls, _ = resolve_env(name)
    env_cfg = build_env_config(name, overrides)
    return lambda: env_cls(env_cfg)


def build_npg_config(cfg: ExperimentConfig) -> npg_mod.NpgConfig:
    section = merge_overrides(dict(cfg.npg), {"workers": cfg.workers})
    try:
        return dataclass_from_dict(npg_mod.NpgConfig, section, path="npg")
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


def build_mppi_section(cfg: ExperimentConfig):
    """Split the mppi config section into (MppiConfig, refinement passes)."""
    section = dict(cfg.mppi)
    n_refine = section.pop("n_refine", 1)
    if not isinstance(n_refine, int) or n_refine < 1:
        raise click.UsageError(f"mppi.n_refine must be a positive int, got {n_refine!r}")
    try:
        return dataclass_from_dict(MppiConfig, section, path="mppi"), n_refine
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


def snapshot_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def _experiment_from_flags(config_path, **flags) -> ExperimentConfig:
    try:
        return load_experiment(config_path, **flags)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


@click.group()
def main():
    """Robot-learning toolkit: sampling, training, control, serving."""


# ----------------------------------------------------------------- bench


@main.command()
@click.option("--env", "env_name", default=None, help="Environment name.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--workers", "workers_csv", default="1,2,4", show_default=True, help="Comma-separated worker counts.")
@click.option("--seconds", default=2.0, show_default=True, help="Sampling duration per worker count.")
@click.option("--seed", default=None, type=int)
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False), help="Directory for bench.csv/bench.json.")
def bench(env_name, config_path, workers_csv, seconds, seed, out_dir):
    """Measure sampling throughput across worker counts."""
    cfg = _experiment_from_flags(config_path, env=env_name, seed=seed, out=out_dir)
    if seconds < 0.1:
        raise click.UsageError(f"--seconds must be >= 0.1, got {seconds}")
    try:
        workers_list = [int(w) for w in workers_csv.split(",") if w.strip()]
    except ValueError:
        raise click.UsageError(f"bad --workers list: {workers_csv!r}")
    if not workers_list or min(workers_list) < 1:
        raise click.UsageError(f"--workers needs positive integers, got {workers_csv!r}")

    factory = build_env_factory(cfg.env, cfg.env_overrides)
    reports = benchmark_throughput(
        factory, workers_list, seconds, seed=subsystem_seed(cfg.seed, "bench")
    )

    base = reports[0].samples_per_sec
    rows = []
    for r in reports:
        speedup = r.samples_per_sec / base
        rows.append(
            f"{r.workers},{r.samples_per_sec:.3f},{speedup:.4f},"
            f"{speedup / r.workers:.4f},{r.wall_s:.6f},"
            f"{r.jitter_max_s:.9f},{r.jitter_p99_s:.9f}"
        )
    csv_text = BENCH_CSV_HEADER + "\n" + "\n".join(rows) + "\n"

    click.echo(f"env: {cfg.env}  duration: {seconds}s per worker count")
    click.echo(f"{'workers':>8} {'samples/s':>12} {'speedup':>8} {'efficiency':>10}")
    for r in reports:
        speedup = r.samples_per_sec / base
        click.echo(
            f"{r.workers:>8} {r.samples_per_sec:>12.1f} {speedup:>8.2f} "
            f"{speedup / r.workers:>10.2f}"
        )

    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.csv").write_text(csv_text)
        (out / "bench.json").write_text(
            json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
        )
        dump_json_file(out / "config_snapshot.json", snapshot_dict(cfg))
        click.echo(f"wrote {out / 'bench.csv'}")


# ------------------------------------------------------------------- mpc


@main.command()
@click.option("--env", "env_name", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--episodes", default=40, show_default=True, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--strict", is_flag=True, default=False, help="Reject inadmissible smoothing taps instead of rescaling.")
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False))
def mpc(env_name, config_path, episodes, seed, strict, out_dir):
    """Run receding-horizon control episodes and report success/timing."""
    if episodes < 1:
        raise click.UsageError("need at least 1 episode")
    cfg = _experiment_from_flags(config_path, env=env_name, seed=seed, out=out_dir)
    mppi_cfg, n_refine = build_mppi_section(cfg)

    factory = build_env_factory(cfg.env, cfg.env_overrides)
    env = factory()
    controller = MppiController(
        factory(),
        mppi_cfg,
        seed=subsystem_seed(cfg.seed, "mppi"),
        strict=strict,
        n_refine=n_refine,
    )

    t0 = time.perf_counter()
    records = run_episodes(
        env, controller, episodes, seed=subsystem_seed(cfg.seed, "episodes")
    )
    wall = time.perf_counter() - t0

    successes = sum(r.success for r in records)
    p = successes / episodes
    ci_lo, ci_hi = success_ci(successes, episodes)
    latencies = np.array([d.latency_s for d in controller.diagnostics])
    episode_walls = np.array([r.mean_latency_s * r.steps for r in records])

    click.echo(f"env: {cfg.env}  episodes: {episodes}  steps/episode: {EPISODE_LEN}")
    click.echo(f"success: {p * 100.0:.1f}%  ci95: [{ci_lo:.1f}, {ci_hi:.1f}]")
    click.echo(
        f"episode wall time: mean {episode_walls.mean():.3f}s  total {wall:.1f}s"
    )
    click.echo(
        "per-step latency: "
        f"p50 {np.percentile(latencies, 50) * 1e3:.2f}ms  "
        f"p90 {np.percentile(latencies, 90) * 1e3:.2f}ms  "
        f"p99 {np.percentile(latencies, 99) * 1e3:.2f}ms  "
        f"max {latencies.max() * 1e3:.2f}ms"
    )

    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        summary = {
            "env": cfg.env,
            "episodes": episodes,
            "success_pct": p * 100.0,
            "ci95_pct": [ci_lo, ci_hi],
            "mean_episode_wall_s": float(episode_walls.mean()),
            "latency_p50_s": float(np.percentile(latencies, 50)),
            "latency_p90_s": float(np.percentile(latencies, 90)),
            "latency_p99_s": float(np.percentile(latencies, 99)),
            "latency_max_s": float(latencies.max()),
            "records": [r.to_dict() for r in records],
        }
        dump_json_file(out / "mpc.json", summary)
        (out / "mpc_diagnostics.csv").write_text(
            diagnostics_to_csv(controller.diagnostics)
        )
        dump_json_file(out / "config_snapshot.json", snapshot_dict(cfg))
        click.echo(f"wrote {out / 'mpc.json'}")


# ----------------------------------------------------------------- train


def _latest_checkpoint_iteration(out: Path) -> int | None:
    latest = None
    for p in out.glob("policy_*.bin"):
        stem = p.stem.split("_")[1]
        if stem.isdigit():
            latest = max(latest or 0, int(stem))
    return latest


@main.command()
@click.option("--env", "env_name", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=None, type=int)
@click.option("--workers", default=None, type=int)
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False))
@click.option("--dry-run", is_flag=True, default=False, help="Validate config and exit.")
@click.option("--resume", is_flag=True, default=False, help="Continue from the latest checkpoint in --out.")
def train(env_name, config_path, seed, workers, out_dir, dry_run, resume):
    """Train a policy with natural gradient iterations."""
    cfg = _experiment_from_flags(
        config_path, env=env_name, seed=seed, workers=workers, out=out_dir
    )
    npg_cfg = build_npg_config(cfg)
    build_env_factory(cfg.env, cfg.env_overrides)

    if dry_run:
        click.echo("config ok (dry run, nothing trained)")
        return
    if not cfg.out:
        raise click.UsageError("train needs --out (or 'out' in the config file)")

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    factory = build_env_factory(cfg.env, cfg.env_overrides)

    policy = value_net = None
    start_iteration = 0
    if resume:
        latest = _latest_checkpoint_iteration(out)
        if latest is None:
            raise click.UsageError(f"--resume: no checkpoints under {out}")
        if latest >= npg_cfg.iterations:
            click.echo(
                f"checkpoint {latest} already at/past iterations={npg_cfg.iterations}; nothing to do"
            )
            return
        policy = load_policy(out / f"policy_{latest:05d}")
        value_net = load_value(out / f"value_{latest:05d}")
        start_iteration = latest
        click.echo(f"resuming from iteration {latest}")

    dump_json_file(out / "config_snapshot.json", snapshot_dict(cfg))

    mode = "a" if start_iteration > 0 else "w"
    train_seed = subsystem_seed(cfg.seed, "train")
    with open(out / "iterations.csv", mode) as log, open(
        out / "timing.csv", mode
    ) as timing:
        if mode == "w":
            log.write(npg_mod.REPORT_CSV_HEADER + "\n")
            timing.write("iteration,wall_s\n")
        for report in npg_mod.train(
            factory,
            npg_cfg,
            seed=train_seed,
            out_dir=str(out),
            policy=policy,
            value_net=value_net,
            start_iteration=start_iteration,
        ):
            log.write(npg_mod.report_csv_row(report) + "\n")
            log.flush()
            timing.write(f"{report.iteration},{report.wall_s:.6f}\n")
            timing.flush()
            if report.iteration % 25 == 0 or report.iteration == npg_cfg.iterations:
                click.echo(
                    f"iteration {report.iteration}: "
                    f"stoc return {report.stoc_return:.2f}, "
                    f"det return {report.det_return:.2f}, "
                    f"kl {report.kl:.4f}"
                )
    click.echo(f"done: {npg_cfg.iterations - start_iteration} iterations into {out}")


# ---------------------------------------------------------------- replay


@main.command()
@click.option("--checkpoint", "checkpoint_base", required=True, type=click.Path(), help="Checkpoint base path (without .bin/.json).")
@click.option("--env", "env_name", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--episodes", default=1, show_default=True, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--out", "out_file", required=True, type=click.Path(dir_okay=False), help="Trajectory file (NDJSON).")
def replay(checkpoint_base, env_name, config_path, episodes, seed, out_file):
    """Roll out a checkpointed policy and write the trajectory file."""
    if episodes < 1:
        raise click.UsageError("need at least 1 episode")
    cfg = _experiment_from_flags(config_path, env=env_name, seed=seed)
    factory = build_env_factory(cfg.env, cfg.env_overrides)
    env = factory()

    base = Path(checkpoint_base)
    if not base.with_suffix(".bin").exists():
        raise click.UsageError(f"no checkpoint at {base}.bin")
    policy = load_policy(base)
    if policy.dobs != env.obsspace.flat_len or policy.dact != env.actionspace.flat_len:
        raise click.UsageError(
            f"checkpoint is {policy.dobs}obs/{policy.dact}act but env "
            f"'{cfg.env}' needs {env.obsspace.flat_len}/{env.actionspace.flat_len}"
        )

    def controller(obs, rng):
        return policy.act_deterministic(obs)

    replay_seed = subsystem_seed(cfg.seed, "replay")
    returns = []
    with open(out_file, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "type": "header",
                    "env": cfg.env,
                    "checkpoint": str(base),
                    "episodes": episodes,
                    "state_layout": "qpos qvel time task",
                }
            )
            + "\n"
        )
        for ep in range(episodes):
            rng = trajectory_rng(replay_seed, ep)
            env.randreset(rng)
            tr = rollout(env, controller, EPISODE_LEN, rng)
            returns.append(float(tr.rews.sum()))
            for t in range(tr.length):
                fh.write(
                    json.dumps(
                        {
                            "episode": ep,
                            "step": t,
                            "state": [float(v) for v in tr.states[t]],
                            "action": [float(v) for v in tr.acts[t]],
                            "reward": float(tr.rews[t]),
                            "eval": float(tr.evals[t]),
                        }
                    )
                    + "\n"
                )
    click.echo(
        f"wrote {out_file}: {episodes} episodes, mean return {np.mean(returns):.3f}"
    )


# ----------------------------------------------------------------- serve


@main.command()
@click.option("--bind", default="127.0.0.1:8800", show_default=True, help="host:port")
@click.option("--env", "env_name", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--controller", "controller_kind", type=click.Choice(["mppi", "checkpoint"]), default="mppi", show_default=True)
@click.option("--checkpoint", "checkpoint_base", default=None, type=click.Path(), help="Policy base path for --controller checkpoint.")
@click.option("--seed", default=None, type=int)
def serve(bind, env_name, config_path, controller_kind, checkpoint_base, seed):
    """Run the live control-loop service."""
    from ctrlkit import liveserve

    cfg = _experiment_from_flags(config_path, env=env_name, seed=seed)
    host, sep, port_text = bind.partition(":")
    if not sep or not port_text.isdigit():
        raise click.UsageError(f"--bind must be host:port, got {bind!r}")

    factory = build_env_factory(cfg.env, cfg.env_overrides)
    if controller_kind == "checkpoint":
        if not checkpoint_base:
            raise click.UsageError("--controller checkpoint needs --checkpoint")
        policy = load_policy(checkpoint_base)
        controller = liveserve.policy_controller(policy)
    else:
        if cfg.mppi:
            mppi_cfg, n_refine = build_mppi_section(cfg)
        else:
            # interactive default: sharp weighting so the planner holds
            # the goal instead of random-walking at uniform weights
            mppi_cfg, n_refine = SERVE_DEFAULT_MPPI, 1
            click.echo(
                "no mppi config given; using interactive defaults "
                f"(H={mppi_cfg.H}, K={mppi_cfg.K}, temperature={mppi_cfg.temperature})"
            )
        controller = MppiController(
            factory(),
            mppi_cfg,
            seed=subsystem_seed(cfg.seed, "mppi"),
            n_refine=n_refine,
        )

    service = liveserve.LiveService(factory(), controller, env_name=cfg.env)
    click.echo(f"serving {cfg.env} on ws://{host}:{port_text}/ws")
    liveserve.run_server(service, host, int(port_text))


if __name__ == "__main__":
    main()
