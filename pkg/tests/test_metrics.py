import json

import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from fieldnav import cli, harness
from fieldnav.metrics import (
    CSV_COLUMNS, EpisodeRow, RunLog, detect_convergence, ema_smooth, run_stability,
    stability_measure, summarize, trailing_mean,
)

reals = st.floats(-1e6, 1e6, allow_nan=False)


def make_log(outcomes, rewards=None, steps=None):
    n = len(outcomes)
    rewards = rewards if rewards is not None else [1.0 if o == "goal" else 0.0 for o in outcomes]
    steps = steps if steps is not None else [10] * n
    return RunLog([EpisodeRow(i + 1, float(r), int(s), o, 0.5, 0.1)
                   for i, (o, r, s) in enumerate(zip(outcomes, rewards, steps))])


def test_trailing_mean_examples():
    assert trailing_mean([0, 1, 1, 1], 2).tolist() == [0.0, 0.5, 1.0, 1.0]
    assert trailing_mean([3.5] * 7, 3).tolist() == [3.5] * 7
    assert trailing_mean([4, -1, 2], 1).tolist() == [4.0, -1.0, 2.0]
    assert trailing_mean([], 5).size == 0
    with pytest.raises(ValueError):
        trailing_mean([1.0], 0)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60))
def test_trailing_mean_long_window_is_cumulative_mean(xs):
    got = trailing_mean(xs, len(xs) + 5)
    expected = [np.mean(xs[: i + 1]) for i in range(len(xs))]
    assert np.allclose(got, expected, rtol=1e-9, atol=1e-9)


def test_ema_examples():
    assert ema_smooth([0.0, 1.0], 0.99).tolist() == pytest.approx([0.0, 0.01])
    assert ema_smooth([2.0, -1.0, 5.0], 0.0).tolist() == [2.0, -1.0, 5.0]
    assert ema_smooth([4.0] * 5, 0.7).tolist() == [4.0] * 5
    with pytest.raises(ValueError):
        ema_smooth([1.0], 1.0)


@given(st.lists(reals, min_size=1, max_size=50), st.floats(0.0, 0.999))
def test_ema_bounded_by_input(xs, factor):
    s = ema_smooth(xs, factor)
    tol = 1e-9 * max(1.0, max(abs(x) for x in xs))
    assert s.min() >= min(xs) - tol and s.max() <= max(xs) + tol


def test_stability_examples():
    assert stability_measure([5] * 10, 30, 0) == 1.0
    steps = [100] * 20 + [10] * 50 + [40] * 50
    assert stability_measure(steps, 30, 20) == 0.5
    with pytest.raises(ValueError):
        stability_measure([1, 2, 3], 30, 3)


@given(st.lists(st.integers(1, 200), min_size=1, max_size=40),
       st.lists(st.integers(1, 200), max_size=40), st.data())
def test_stability_ignores_prepended_episodes(post, pre, data):
    start = data.draw(st.integers(0, len(post) - 1))
    base = stability_measure(post, 30, start)
    assert stability_measure(pre + post, 30, len(pre) + start) == base
    assert 0.0 <= base <= 1.0


def test_discrete_convergence_constructed_log():
    outcomes = ["obstacle"] * 3020 + ["goal"] * 100 + ["timeout"] + ["goal"] * 50
    assert detect_convergence(make_log(outcomes), "discrete") == 3120


def test_discrete_needs_a_full_window():
    assert detect_convergence(make_log(["goal"] * 99), "discrete") is None
    assert detect_convergence(make_log(["goal"] * 100), "discrete") == 100


def test_continuous_convergence_is_a_conjunction():
    n = 300
    good = make_log(["goal"] * n, rewards=[2.0] * n, steps=[25] * n)
    assert detect_convergence(good, "continuous") == 100
    reward_only = make_log(["goal"] * n, rewards=[2.0] * n, steps=[45] * n)
    assert detect_convergence(reward_only, "continuous") is None
    steps_only = make_log(["collision"] * n, rewards=[-20.0] * n, steps=[5] * n)
    assert detect_convergence(steps_only, "continuous") is None
    # -5 itself is not enough: the reward bound is strict
    edge = make_log(["goal"] * n, rewards=[-5.0] * n, steps=[10] * n)
    assert detect_convergence(edge, "continuous") is None
    with pytest.raises(ValueError):
        detect_convergence(good, "hybrid")


def test_continuous_convergence_first_crossing():
    rewards = [-50.0] * 150 + [3.0] * 200
    steps = [200] * 150 + [20] * 200
    log = make_log(["timeout"] * 150 + ["goal"] * 200, rewards, steps)
    conv = detect_convergence(log, "continuous")
    window_mean = lambda xs, e: np.mean(xs[e - 100:e])  # noqa: E731
    assert window_mean(rewards, conv) > -5 and window_mean(steps, conv) < 30
    assert not (window_mean(rewards, conv - 1) > -5 and window_mean(steps, conv - 1) < 30)


def test_run_stability_zero_without_convergence():
    log = make_log(["timeout"] * 200, rewards=[-40.0] * 200, steps=[200] * 200)
    assert run_stability(log) == 0.0


def test_run_stability_counts_solved_short_episodes():
    outcomes = ["goal"] * 150 + ["collision"] * 10 + ["goal"] * 40
    steps = [20] * 150 + [5] * 10 + [35] * 10 + [20] * 30
    log = make_log(outcomes, rewards=[1.0] * 200, steps=steps)
    # converges at episode 100; of episodes 100..200, 10 collide and 10 are slow
    assert run_stability(log) == pytest.approx(81 / 101)


def test_summary_max_exploration_is_raw_max():
    log = make_log(["goal", "timeout", "goal"], steps=[14, 200, 31])
    s = summarize(log, "discrete")
    assert s["max_exploration"] == 200 and s["convergence"] is None


row_strategy = st.builds(
    EpisodeRow, episode=st.integers(1, 10**6), reward=st.floats(allow_infinity=False),
    steps=st.integers(0, 10**4), outcome=st.sampled_from(["goal", "obstacle", "timeout"]),
    epsilon_or_noise=st.floats(allow_infinity=False), mean_loss=st.floats(allow_infinity=False))


@settings(max_examples=100)
@given(st.lists(row_strategy, max_size=30))
def test_csv_round_trip_is_lossless(rows):
    log = RunLog(rows)
    text = log.to_csv()
    back = RunLog.from_csv(text)
    assert back.rows == rows
    assert back.to_csv() == text


def test_csv_header_exact():
    assert make_log(["goal"]).to_csv().splitlines()[0] == ",".join(CSV_COLUMNS)
    assert CSV_COLUMNS == ("episode", "reward", "steps", "outcome", "epsilon_or_noise", "mean_loss")
    with pytest.raises(ValueError):
        RunLog.from_csv("episode,reward\n1,2\n")


def test_save_and_load_keep_metadata(tmp_path):
    log = make_log(["goal", "obstacle"])
    log.metadata.update(algorithm="dqn", seed=3)
    log.save(tmp_path / "run.csv")
    back = RunLog.load(tmp_path / "run.csv")
    assert back.rows == log.rows and back.metadata == {"algorithm": "dqn", "seed": 3}


# harness and CLI

def small_config(tmp_path, **extra):
    cfg = dict(algos=["dqn"], envs=["8x8"], seeds=[0], episodes=6,
               agent={"hidden": [8], "batch_size": 4})
    cfg.update(extra)
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(harness.ConfigError):
        harness.load_config("algos: [dqn]\nenvs: [8x8]\nlearning_rte: 0.1\n")
    with pytest.raises(harness.ConfigError):
        harness.load_config("algos: [dqn]\nenvs: [8x8]\nagent: {learning_rte: 0.1}\n")
    with pytest.raises(harness.ConfigError):
        harness.load_config("algos: [qlearning]\nenvs: [8x8]\n")
    with pytest.raises(harness.ConfigError):
        harness.load_config("algos: [td3]\nenvs: [8x8]\n")  # no matching pair
    cfg = harness.load_config(small_config(tmp_path))
    assert cfg.runs()[0].agent_config().hidden == (8,)


def test_matrix_cardinality():
    cfg = harness.load_config("algos: [dqn, double, dueling]\nenvs: [8x8]\nseeds: [0, 1, 2]\n")
    ids = [r.run_id for r in cfg.runs()]
    assert len(ids) == 9 and len(set(ids)) == 9
    mixed = harness.load_config("algos: [dqn, td3]\nenvs: [8x8, scenario1]\nseeds: [0]\n")
    assert sorted(r.run_id for r in mixed.runs()) == ["dqn_8x8_s0", "td3_scenario1_s0"]


def test_run_experiment_outputs_and_determinism(tmp_path):
    cfg = harness.load_config(small_config(tmp_path), seeds=[0, 1])
    results = harness.run_experiment(cfg, tmp_path / "a")
    harness.run_experiment(cfg, tmp_path / "b")
    assert [r.status for r in results] == ["ok", "ok"]
    for run_id in ("dqn_8x8_s0", "dqn_8x8_s1"):
        for suffix in (".csv", ".meta.json", "_path.csv", "_reward.svg", "_steps.svg",
                       "_path.svg", "_qnet.npz"):
            assert (tmp_path / "a" / f"{run_id}{suffix}").exists()
        a = (tmp_path / "a" / f"{run_id}.csv").read_bytes()
        assert a == (tmp_path / "b" / f"{run_id}.csv").read_bytes()
        meta = json.loads((tmp_path / "a" / f"{run_id}.meta.json").read_text())
        assert meta["algorithm"] == "dqn" and meta["agent_config"]["hidden"] == [8]
        assert meta["wall_time"] > 0
    svg = (tmp_path / "a" / "dqn_8x8_s0_reward.svg").read_text()
    assert svg.startswith("<svg") and "<polyline" in svg
    report = (tmp_path / "a" / "report.csv").read_text().splitlines()
    assert report[0].startswith("run_id,algorithm,env,seed,status,episodes,convergence")
    assert len(report) == 3


def test_failed_run_is_recorded_and_matrix_continues(tmp_path, monkeypatch):
    real = harness.execute

    def flaky(spec, out_dir):
        if spec.seed == 1:
            raise RuntimeError("boom")
        return real(spec, out_dir)

    monkeypatch.setattr(harness, "execute", flaky)
    cfg = harness.load_config(small_config(tmp_path), seeds=[0, 1, 2])
    results = harness.run_experiment(cfg, tmp_path / "out")
    assert [r.status for r in results] == ["ok", "failed", "ok"]
    meta = json.loads((tmp_path / "out" / "dqn_8x8_s1.meta.json").read_text())
    assert meta["status"] == "failed" and "boom" in meta["error"]


def test_cli_train_eval_report_plot(tmp_path, capsys):
    out = tmp_path / "res"
    cfg = small_config(tmp_path)
    assert cli.main(["train", "--config", str(cfg), "--out", str(out), "--seed", "5"]) == 0
    assert (out / "dqn_8x8_s5.csv").exists()
    code = cli.main(["eval", "dqn_8x8_s5", "--out", str(out)])
    assert code in (0, 1)
    assert "outcome=" in capsys.readouterr().out
    assert cli.main(["report", "--out", str(out)]) == 0
    assert "dqn_8x8_s5" in capsys.readouterr().out
    (out / "dqn_8x8_s5_reward.svg").unlink()
    assert cli.main(["plot", str(out / "dqn_8x8_s5.csv")]) == 0
    assert (out / "dqn_8x8_s5_reward.svg").exists()


def test_cli_rejects_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("algos: [dqn]\nenvs: [8x8]\nbogus: 1\n")
    assert cli.main(["matrix", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_cli_continuous_run(tmp_path, capsys):
    out = tmp_path / "c"
    code = cli.main(["train", "--algo", "td3", "--env", "scenario2", "--episodes", "2",
                     "--out", str(out)])
    assert code == 0
    assert (out / "td3_scenario2_s0_ckpt" / "actor_final.npz").exists()
    header = (out / "td3_scenario2_s0_path.csv").read_text().splitlines()[0]
    assert header == "step,x,y"
    cli.main(["eval", "td3_scenario2_s0", "--out", str(out)])
    assert "outcome=" in capsys.readouterr().out
