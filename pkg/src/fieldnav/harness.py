"""Experiment runner: config loading, the algorithm x env x seed matrix, outputs."""
from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import metrics, plots
from .agents import actor_critic, dqn
from .envs import continuous, grid
from .nn import forward, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

DISCRETE_ALGOS = dqn.VARIANTS
CONTINUOUS_ALGOS = actor_critic.ALGOS
GRID_NAMES = ("8x8", "10x10")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    algos: list
    envs: list
    seeds: list = field(default_factory=lambda: [0])
    name: str = "experiment"
    episodes: int | None = None
    slippery: bool = False
    workers: int = 1
    stop_at_convergence: bool = False
    trailing_window: int = 100
    stability_threshold: int = 30
    checkpoints: bool = True
    agent: dict = field(default_factory=dict)

    def __post_init__(self):
        for algo in self.algos:
            if algo not in DISCRETE_ALGOS + CONTINUOUS_ALGOS:
                raise ConfigError(f"unknown algorithm {algo!r}")
        if not self.envs or not self.seeds:
            raise ConfigError("envs and seeds must be non-empty")
        if self.episodes is not None and self.episodes < 1:
            raise ConfigError("episodes must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        allowed = set()
        for algo in self.algos:
            allowed |= set(_agent_fields(algo))
        unknown = set(self.agent) - allowed
        if unknown:
            raise ConfigError(f"unknown agent keys {sorted(unknown)}")
        if not self.runs():
            raise ConfigError("no algorithm/environment pair of matching kind")

    def runs(self):
        return [RunSpec(a, str(e), int(s), self)
                for a, e, s in itertools.product(self.algos, self.envs, self.seeds)
                if algo_kind(a) == env_kind(e)]

    def to_dict(self):
        return dataclasses.asdict(self)


def _agent_fields(algo):
    cls = dqn.DqnConfig if algo in DISCRETE_ALGOS else actor_critic.ActorCriticConfig
    return [f.name for f in dataclasses.fields(cls) if f.name not in ("variant", "algo")]


def algo_kind(algo):
    if algo in DISCRETE_ALGOS:
        return "discrete"
    if algo in CONTINUOUS_ALGOS:
        return "continuous"
    raise ConfigError(f"unknown algorithm {algo!r}")


def env_kind(env):
    env = str(env)
    if env in GRID_NAMES:
        return "discrete"
    if _scenario_number(env) is not None:
        return "continuous"
    path = Path(env)
    if path.is_file():
        text = path.read_text()
        return "continuous" if any(ln.split()[:1] == ["start"] for ln in text.splitlines()) \
            else "discrete"
    raise ConfigError(f"unknown environment {env!r}")


def _scenario_number(env):
    tail = env.removeprefix("scenario").removeprefix("_")
    return int(tail) if tail.isdigit() and int(tail) in continuous.SCENARIOS else None


def load_config(path_or_text, **overrides):
    """Read a YAML experiment config; unknown keys are an error."""
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str)
                                          and "\n" not in path_or_text
                                          and Path(path_or_text).is_file()):
        raw = yaml.safe_load(Path(path_or_text).read_text())
    else:
        raw = yaml.safe_load(path_or_text)
    raw = dict(raw or {})
    raw.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for key in ("algos", "envs", "seeds"):
        if key in raw and not isinstance(raw[key], list):
            raw[key] = [raw[key]]
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class RunSpec:
    algo: str
    env: str
    seed: int
    experiment: ExperimentConfig

    @property
    def kind(self):
        return algo_kind(self.algo)

    @property
    def run_id(self):
        env = Path(self.env).stem if Path(self.env).suffix else self.env
        if self.kind == "continuous" and _scenario_number(self.env) is not None:
            env = f"scenario{_scenario_number(self.env)}"
        slip = "_slippery" if self.kind == "discrete" and self.experiment.slippery else ""
        return f"{self.algo}_{env}{slip}_s{self.seed}"

    def agent_config(self):
        keys = set(_agent_fields(self.algo))
        overrides = {k: v for k, v in self.experiment.agent.items() if k in keys}
        if self.experiment.episodes is not None:
            overrides["episodes"] = self.experiment.episodes
        if self.kind == "discrete":
            return dqn.DqnConfig(variant=self.algo, **overrides)
        return actor_critic.ActorCriticConfig.for_algo(self.algo, **overrides)

    def make_env(self):
        if self.kind == "discrete":
            rows = grid.builtin_map(self.env) if self.env in GRID_NAMES else grid.load_map(self.env)
            return grid.GridWorld(rows, slippery=self.experiment.slippery)
        n = _scenario_number(self.env)
        return continuous.ContinuousFarm(n if n is not None else self.env)


@dataclass
class RunResult:
    run_id: str
    status: str
    csv_path: str | None = None
    error: str | None = None
    summary: dict = field(default_factory=dict)


def _stopper(spec):
    if not spec.experiment.stop_at_convergence:
        return None
    window = spec.experiment.trailing_window

    def stop(rows):
        if len(rows) < window:
            return False
        tail = rows[-window:]
        if spec.kind == "discrete":
            return all(r.outcome == "goal" for r in tail)
        return (np.mean([r.reward for r in tail]) > metrics.CONT_REWARD_THRESHOLD
                and np.mean([r.steps for r in tail]) < metrics.CONT_STEPS_THRESHOLD)
    return stop


def execute(spec, out_dir):
    """Train one run and write its CSV, metadata, path trace and plots."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = spec.agent_config()
    env = spec.make_env()
    rng = np.random.default_rng(spec.seed)
    stop = _stopper(spec)
    t0 = time.perf_counter()
    if spec.kind == "discrete":
        res = dqn.train(env, cfg, rng, stop=stop)
        path = dqn.extract_path(res.agent, env)
        trace_rows = [(i, s, s // env.width, s % env.width) for i, s in enumerate(path)]
        trace_header = ("step", "state", "row", "col")
        if spec.experiment.checkpoints:
            save_checkpoint(res.agent.policy_net, out_dir / f"{spec.run_id}_qnet.npz")
        path_svg = plots.grid_path_svg(env.rows, path, spec.run_id)
    else:
        ckpt = out_dir / f"{spec.run_id}_ckpt" if spec.experiment.checkpoints else None
        res = actor_critic.train(env, cfg, rng, checkpoint_dir=ckpt, stop=stop)
        positions, _ = actor_critic.greedy_rollout(res.agent, env)
        trace_rows = [(i, repr(float(x)), repr(float(y))) for i, (x, y) in enumerate(positions)]
        trace_header = ("step", "x", "y")
        path_svg = plots.field_path_svg(env.scenario, positions, spec.run_id)
    wall = time.perf_counter() - t0

    meta = {
        "run_id": spec.run_id,
        "algorithm": spec.algo,
        "env": spec.env,
        "kind": spec.kind,
        "seed": spec.seed,
        "slippery": spec.experiment.slippery if spec.kind == "discrete" else None,
        "agent_config": cfg.to_dict(),
        "experiment": spec.experiment.name,
        "wall_time": wall,
        "status": "ok",
    }
    run_log = metrics.RunLog.from_records(res.log, meta)
    csv_path = out_dir / f"{spec.run_id}.csv"
    run_log.save(csv_path)
    with open(out_dir / f"{spec.run_id}_path.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trace_header)
        writer.writerows(trace_rows)
    write_curve_plots(run_log, out_dir / spec.run_id, spec.kind, spec.experiment.trailing_window)
    (out_dir / f"{spec.run_id}_path.svg").write_text(path_svg)
    summary = metrics.summarize(run_log, spec.kind, spec.experiment.trailing_window,
                                spec.experiment.stability_threshold)
    return RunResult(spec.run_id, "ok", str(csv_path), summary=summary)


def write_curve_plots(run_log, stem, kind, window=100):
    stem = Path(stem)
    if kind == "discrete":
        curve = {"trailing successes": metrics.trailing_success(run_log, window)}
        ylabel = f"goals in last {window}"
    else:
        curve = {"trailing reward": metrics.trailing_mean(run_log.rewards, window)}
        ylabel = f"mean reward, last {window}"
    stem.with_name(stem.name + "_reward.svg").write_text(
        plots.line_chart(curve, stem.name, ylabel=ylabel))
    steps = {"steps": run_log.steps, "smoothed (0.99)": metrics.ema_smooth(run_log.steps, 0.99)}
    stem.with_name(stem.name + "_steps.svg").write_text(
        plots.line_chart(steps, stem.name, ylabel="steps per episode"))


def _execute_safely(spec, out_dir):
    try:
        return execute(spec, out_dir)
    except Exception as exc:  # one bad run must not sink the matrix
        err = "".join(traceback.format_exception(exc))
        meta = {"run_id": spec.run_id, "algorithm": spec.algo, "env": spec.env,
                "seed": spec.seed, "status": "failed", "error": err}
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / f"{spec.run_id}.meta.json").write_text(json.dumps(meta, indent=2))
        return RunResult(spec.run_id, "failed", error=err)


def run_experiment(config, out_dir):
    """Run every (algo, env, seed) combination; failures are recorded and skipped."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = config.runs()
    (out_dir / "config.yaml").write_text(yaml.safe_dump(config.to_dict(), sort_keys=True))
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_execute_safely, specs, itertools.repeat(out_dir)))
    else:
        results = []
        for spec in specs:
            log.info("starting %s", spec.run_id)
            results.append(_execute_safely(spec, out_dir))
    for r in results:
        if r.status == "failed":
            log.error("run %s failed:\n%s", r.run_id, r.error)
    write_report(out_dir)
    return results


REPORT_COLUMNS = ("run_id", "algorithm", "env", "seed", "status", "episodes", "convergence",
                  "final_trailing_success", "stability", "mean_goal_steps", "max_exploration",
                  "wall_time")


def collect(out_dir):
    """Summary rows for every run found in ``out_dir``."""
    rows = []
    for meta_path in sorted(Path(out_dir).glob("*.meta.json")):
        meta = json.loads(meta_path.read_text())
        row = {k: meta.get(k) for k in ("run_id", "algorithm", "env", "seed", "status")}
        csv_path = meta_path.with_name(meta_path.name.removesuffix(".meta.json") + ".csv")
        if meta.get("status") == "ok" and csv_path.exists():
            run_log = metrics.RunLog.load(csv_path)
            row.update(metrics.summarize(run_log, meta["kind"]))
        rows.append(row)
    return rows


def write_report(out_dir):
    rows = collect(out_dir)
    path = Path(out_dir) / "report.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, REPORT_COLUMNS, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


def format_report(rows):
    """Plain-text comparison table."""
    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)
    table = [REPORT_COLUMNS] + [tuple(cell(r.get(c)) for c in REPORT_COLUMNS) for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(REPORT_COLUMNS))]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in table)


class _FrozenQ:
    """Just enough of an agent for :func:`dqn.extract_path`."""

    def __init__(self, net):
        self.net = net

    def q_values(self, state):
        return forward(self.net, state).output


def evaluate(out_dir, run_id):
    """Greedy rollout of a finished run's saved network. Returns (path, outcome)."""
    out_dir = Path(out_dir)
    meta = json.loads((out_dir / f"{run_id}.meta.json").read_text())
    exp = ExperimentConfig(algos=[meta["algorithm"]], envs=[meta["env"]], seeds=[meta["seed"]],
                           slippery=bool(meta.get("slippery")))
    spec = exp.runs()[0]
    env = spec.make_env()
    if spec.kind == "discrete":
        net = load_checkpoint(out_dir / f"{run_id}_qnet.npz")
        path = dqn.extract_path(_FrozenQ(net), env)
        outcome = "goal" if path[-1] == env.goal else (
            "obstacle" if env.is_obstacle(path[-1]) else "timeout")
        return path, outcome
    cfg = actor_critic.ActorCriticConfig(**meta["agent_config"])
    agent = actor_critic.ActorCriticAgent(env.obs_dim, env.action_dim, cfg,
                                          np.random.default_rng(0), env.low, env.high)
    agent.actor.copy_from(load_checkpoint(out_dir / f"{run_id}_ckpt" / "actor_final.npz"))
    positions, last = actor_critic.greedy_rollout(agent, env)
    return positions, last.outcome
