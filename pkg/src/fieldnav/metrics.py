"""Learning-curve metrics, convergence detection and run logs."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_COLUMNS = ("episode", "reward", "steps", "outcome", "epsilon_or_noise", "mean_loss")

# continuous convergence: trailing reward above this and trailing steps below
CONT_REWARD_THRESHOLD = -5.0
CONT_STEPS_THRESHOLD = 30


def trailing_mean(series, window):
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        return x
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(x.size)
    lo = np.maximum(0, idx - window + 1)
    return (csum[idx + 1] - csum[lo]) / (idx + 1 - lo)


def trailing_sum(series, window):
    x = np.asarray(series, dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(x.size)
    return csum[idx + 1] - csum[np.maximum(0, idx - window + 1)]


def ema_smooth(series, factor):
    """s_0 = x_0, s_i = factor * s_{i-1} + (1 - factor) * x_i."""
    if not 0.0 <= factor < 1.0:
        raise ValueError("factor must lie in [0, 1)")
    x = np.asarray(series, dtype=np.float64)
    out = np.empty_like(x)
    acc = 0.0
    for i, v in enumerate(x):
        acc = v if i == 0 else factor * acc + (1.0 - factor) * v
        out[i] = acc
    return out


def stability_measure(steps, threshold, convergence_start, solved=None):
    """Fraction of episodes from ``convergence_start`` (0-based) on with steps < threshold.

    When ``solved`` is given, an episode only counts if it was also solved.
    """
    steps = np.asarray(steps)
    if not 0 <= convergence_start < steps.size:
        raise ValueError(f"convergence_start {convergence_start} outside [0, {steps.size})")
    ok = steps[convergence_start:] < threshold
    if solved is not None:
        ok &= np.asarray(solved, dtype=bool)[convergence_start:]
    return float(ok.mean())


@dataclass
class EpisodeRow:
    episode: int
    reward: float
    steps: int
    outcome: str
    epsilon_or_noise: float
    mean_loss: float

    def __eq__(self, other):
        if not isinstance(other, EpisodeRow):
            return NotImplemented
        return (self.episode == other.episode and self.steps == other.steps
                and self.outcome == other.outcome
                and all(_same_float(getattr(self, f), getattr(other, f))
                        for f in ("reward", "epsilon_or_noise", "mean_loss")))


def _same_float(a, b):
    return (math.isnan(a) and math.isnan(b)) or a == b


@dataclass
class RunLog:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, records, metadata=None):
        rows = []
        for r in records:
            extra = getattr(r, "epsilon", None)
            if extra is None:
                extra = getattr(r, "noise", float("nan"))
            rows.append(EpisodeRow(int(r.episode), float(r.reward), int(r.steps), r.outcome,
                                   float(extra), float(r.mean_loss)))
        return cls(rows, dict(metadata or {}))

    def __len__(self):
        return len(self.rows)

    @property
    def rewards(self):
        return np.array([r.reward for r in self.rows])

    @property
    def steps(self):
        return np.array([r.steps for r in self.rows])

    @property
    def outcomes(self):
        return [r.outcome for r in self.rows]

    @property
    def successes(self):
        return np.array([r.outcome == "goal" for r in self.rows])

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([r.episode, repr(r.reward), r.steps, r.outcome,
                             repr(r.epsilon_or_noise), repr(r.mean_loss)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, metadata=None):
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if tuple(header or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        rows = [EpisodeRow(int(e), float(r), int(s), o, float(x), float(l))
                for e, r, s, o, x, l in reader]
        return cls(rows, dict(metadata or {}))

    def save(self, path):
        path = Path(path)
        path.write_text(self.to_csv())
        path.with_suffix(".meta.json").write_text(json.dumps(self.metadata, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta_path = path.with_suffix(".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls.from_csv(path.read_text(), meta)


def detect_convergence(log, kind, window=100, reward_threshold=CONT_REWARD_THRESHOLD,
                       steps_threshold=CONT_STEPS_THRESHOLD):
    """Episode number at which a run counts as converged, or None.

    discrete: every one of the last ``window`` episodes reached the goal.
    continuous: trailing mean reward > ``reward_threshold`` and trailing mean
    steps < ``steps_threshold``. Only full windows are considered.
    """
    if len(log) == 0:
        return None
    episodes = [r.episode for r in log.rows]
    if kind == "discrete":
        ok = trailing_sum(log.successes, window) >= window
    elif kind == "continuous":
        ok = ((trailing_mean(log.rewards, window) > reward_threshold)
              & (trailing_mean(log.steps, window) < steps_threshold))
    else:
        raise ValueError("kind must be 'discrete' or 'continuous'")
    ok[: window - 1] = False
    hits = np.flatnonzero(ok)
    return episodes[hits[0]] if hits.size else None


def trailing_success(log, window=100):
    """Goal count over the trailing window, per episode (0..window)."""
    return trailing_sum(log.successes, window)


def max_exploration(log):
    return int(log.steps.max()) if len(log) else 0


def summarize(log, kind, window=100, stability_threshold=CONT_STEPS_THRESHOLD):
    """Headline numbers for one run, as used in the comparison tables."""
    out = {
        "episodes": len(log),
        "convergence": detect_convergence(log, kind, window),
        "max_exploration": max_exploration(log),
        "wall_time": log.metadata.get("wall_time"),
    }
    if kind == "discrete":
        out["final_trailing_success"] = float(trailing_success(log, window)[-1]) if len(log) else 0.0
    else:
        out["stability"] = run_stability(log, window, stability_threshold)
        solved = log.steps[log.successes]
        out["mean_goal_steps"] = float(solved.mean()) if solved.size else None
    return out


def run_stability(log, window=100, threshold=CONT_STEPS_THRESHOLD):
    """Stability from the detected convergence episode on; 0.0 if never converged."""
    conv = detect_convergence(log, "continuous", window)
    if conv is None:
        return 0.0
    start = [r.episode for r in log.rows].index(conv)
    return stability_measure(log.steps, threshold, start, solved=log.successes)
