import csv
import io
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttql.deepq import RunLog
from ttql.harness import (
    BudgetMismatch,
    ConfigError,
    EPISODE_FIELDS,
    ExperimentConfig,
    cached_source,
    compare_runs,
    dumps_config,
    emit_charts,
    load_config,
    loads_config,
    read_run,
    run_experiment,
    summary_csv,
    summary_table,
    train_source,
    write_summary,
)
from ttql.harness import run as run_mod
from ttql.harness.compare import reward_auc
from ttql.harness.config import BUNDLED_CONFIGS, scaled
from ttql.harness.logs import EPISODES_CSV, TICKS_CSV
from ttql.mdp import EndReason, EpisodeLog
from ttql.net import network_to_bytes

TICK_HEADER = "iteration,loss,mnbe_main,mnbe_source,transfer_used,exploration_param"
EPISODE_HEADER = "run_id,episode_index,start_iteration,step_count,cumulative_reward,ended_by"
TINY = """
experiment_name = "tiny"
regime = "{regime}"
scale = 0.01
gamma = 0.9
learning_rate = 1e-3
hidden_sizes = [16, 16]
"""


def tiny_config(tmp_path, regime="ttql", **extra):
    path = tmp_path / f"{regime}.toml"
    path.write_text(TINY.format(regime=regime) + "".join(f"{k} = {v!r}\n".replace("'", '"') for k, v in extra.items()))
    return load_config(path)


@pytest.fixture(scope="module")
def regime_runs(tmp_path_factory):
    """One tiny run per regime sharing a cached source network."""
    root = tmp_path_factory.mktemp("runs")
    out = {}
    for regime in ("no_transfer", "warm_start", "ttql"):
        cfg = tiny_config(root, regime)
        out[regime] = run_experiment(cfg, root / regime, cache_dir=root / "cache")
    return root, out


# config

def test_defaults_from_empty_file(tmp_path):
    p = tmp_path / "empty.toml"
    p.write_text("")
    cfg = load_config(p)
    assert cfg == ExperimentConfig()
    d = cfg.deep_config()
    assert (d.gamma, d.learning_rate, d.training_interval, d.target_update_period, d.batch_size) == (0.99, 2e-6, 16, 15_000, 32)
    assert (d.warmup_steps, d.max_iterations, d.decay_horizon, d.dropout_rate) == (5000, 150_000, 120_000, 0.1)
    assert cfg.physics()["action_count"] == 25 and cfg.loss == "mse"


@pytest.mark.parametrize("text,key", [
    ("gamma = 1.5", "gamma"),
    ("gamma = 0.0", "gamma"),
    ("seed = -1", "seed"),
    ("regime = \"transfer\"", "regime"),
    ("exploration = \"softmax\"", "exploration"),
    ("scale = 0.0001", "scale"),
    ("learning_rate = \"fast\"", "learning_rate"),
    ("batch_size = 2.5", "batch_size"),
    ("target_map = \"nowhere.toml\"", "target_map"),
])
def test_invalid_values_name_their_key(tmp_path, text, key):
    p = tmp_path / "c.toml"
    p.write_text(text + "\n")
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert info.value.key == key


def test_unknown_key_strict_and_lenient(tmp_path, caplog):
    p = tmp_path / "c.toml"
    p.write_text("gama = 0.5\n")
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert info.value.key == "gama"
    assert load_config(p, strict=False) == ExperimentConfig()
    assert "gama" in caplog.text


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")
    p = tmp_path / "bad.toml"
    p.write_text("gamma = = 3\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_relative_map_resolves_next_to_config(tmp_path):
    (tmp_path / "room.toml").write_text("width = 6.0\nheight = 6.0\nstart = [3.0, 3.0]\nobstacles = []\n")
    p = tmp_path / "c.toml"
    p.write_text('target_map = "room.toml"\n')
    assert load_config(p).target_world().width == 6.0


def test_bundled_configs_load():
    for name in BUNDLED_CONFIGS:
        cfg = load_config(name)
        d = cfg.deep_config()
        assert d.max_iterations == 7500 and d.warmup_steps == 250


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0.01, 0.999),
    st.floats(1e-7, 1e-2),
    st.sampled_from(["no_transfer", "warm_start", "ttql"]),
    st.sampled_from(["eps-linear", "eps-exp", "boltzmann", "ucb"]),
    st.integers(0, 2**63 - 1),
    st.lists(st.integers(1, 128), min_size=1, max_size=3),
)
def test_config_roundtrip(gamma, lr, regime, exploration, seed, hidden):
    cfg = ExperimentConfig(gamma=gamma, learning_rate=lr, regime=regime, exploration=exploration, seed=seed, hidden_sizes=tuple(hidden))
    assert loads_config(dumps_config(cfg)) == cfg


def test_scaling_keeps_proportions():
    cfg = ExperimentConfig(scale=0.05)
    d = cfg.deep_config()
    assert (d.max_iterations, d.warmup_steps, d.target_update_period, d.decay_horizon) == (7500, 250, 750, 6000)
    assert d.training_interval == 1  # 16 * 0.05 rounds to 1
    assert scaled(16, 0.01) == 1 and scaled(150_000, 1.0) == 150_000


def test_source_config_never_transfers():
    cfg = ExperimentConfig(regime="ttql", source_scale=2.0, scale=0.05)
    assert cfg.deep_config().transfer_enabled
    src = cfg.deep_config(source=True)
    assert not src.transfer_enabled and src.max_iterations == 15_000


# runs and logs

def test_csv_schemas(regime_runs):
    root, logs = regime_runs
    run_dir = root / "ttql"
    episodes = (run_dir / EPISODES_CSV).read_text().splitlines()
    ticks = (run_dir / TICKS_CSV).read_text().splitlines()
    assert episodes[0] == EPISODE_HEADER == ",".join(EPISODE_FIELDS)
    assert ticks[0] == TICK_HEADER
    rows = list(csv.DictReader(io.StringIO("\n".join(episodes))))
    assert {r["run_id"] for r in rows} == {"tiny-ttql-seed0"}
    assert {r["ended_by"] for r in rows} <= {e.value for e in EndReason}
    assert sum(int(r["step_count"]) for r in rows) == logs["ttql"].total_iterations == 1500
    starts = [int(r["start_iteration"]) for r in rows]
    lengths = [int(r["step_count"]) for r in rows]
    assert starts == list(np.cumsum([0] + lengths[:-1]))
    iters = [int(line.split(",")[0]) for line in ticks[1:]]
    assert all(a < b for a, b in zip(iters, iters[1:]))


def test_read_run_roundtrip(regime_runs):
    root, logs = regime_runs
    back = read_run(root / "ttql")
    assert back.episodes == logs["ttql"].episodes
    assert back.total_iterations == logs["ttql"].total_iterations == 1500
    assert len(back.ticks) == len(logs["ttql"].ticks)
    for a, b in zip(back.ticks, logs["ttql"].ticks):
        assert a == b


def test_config_snapshot_reloads(regime_runs):
    root, _ = regime_runs
    cfg = load_config(root / "ttql" / "config.toml")
    assert cfg.regime == "ttql" and cfg.hidden_sizes == (16, 16)


def test_no_transfer_column_is_zero(regime_runs):
    root, _ = regime_runs
    rows = list(csv.DictReader(open(root / "no_transfer" / TICKS_CSV)))
    assert rows and all(r["transfer_used"] == "0" and r["mnbe_source"] == "" for r in rows)


def test_ttql_reports_source_scores(regime_runs):
    _, logs = regime_runs
    assert all(t["mnbe_source"] is not None for t in logs["ttql"].ticks)


def test_run_is_byte_identical(tmp_path):
    cfg = tiny_config(tmp_path, "ttql")
    run_experiment(cfg, tmp_path / "a", cache_dir=tmp_path / "cache")
    run_experiment(cfg, tmp_path / "b", cache_dir=tmp_path / "cache")
    for name in (EPISODES_CSV, TICKS_CSV, "config.toml", "chart_reward.svg", "chart_transfers.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_source_cache_is_reused(tmp_path, monkeypatch):
    cfg = tiny_config(tmp_path, "ttql")
    first = cached_source(cfg, tmp_path / "cache")
    assert len(list((tmp_path / "cache").iterdir())) == 1
    calls = []
    monkeypatch.setattr(run_mod, "_train_source", lambda c: calls.append(c))
    second = cached_source(cfg, tmp_path / "cache")
    assert not calls and network_to_bytes(first) == network_to_bytes(second)
    # a different seed needs its own source
    other = tiny_config(tmp_path, "ttql", seed=1)
    assert run_mod.source_cache_path(other, tmp_path / "cache") != run_mod.source_cache_path(cfg, tmp_path / "cache")


def test_warm_start_begins_at_source(tmp_path, monkeypatch):
    cfg = tiny_config(tmp_path, "warm_start")
    source = cached_source(cfg, tmp_path / "cache")
    captured = {}
    real = run_mod.train_target_task

    def spy(env, dcfg, seed, source_params=None, init_from_source=False):
        captured["init"] = init_from_source
        captured["source"] = network_to_bytes(source_params)
        return real(env, dcfg, seed, source_params=source_params, init_from_source=init_from_source)

    monkeypatch.setattr(run_mod, "train_target_task", spy)
    run_experiment(cfg, cache_dir=tmp_path / "cache")
    assert captured == {"init": True, "source": network_to_bytes(source)}


def test_train_source_writes_network(tmp_path):
    cfg = tiny_config(tmp_path, "ttql")
    net, log = train_source(cfg, tmp_path / "src", tmp_path / "cache")
    assert (tmp_path / "src" / "source.ttqlnet").read_bytes() == network_to_bytes(net)
    assert read_run(tmp_path / "src").episodes == log.episodes
    assert network_to_bytes(cached_source(cfg, tmp_path / "cache")) == network_to_bytes(net)


def test_failed_run_leaves_nothing(tmp_path, monkeypatch):
    cfg = tiny_config(tmp_path, "no_transfer")

    def boom(*a, **k):
        raise RuntimeError("chart failure")

    monkeypatch.setattr(run_mod, "emit_charts", boom)
    with pytest.raises(RuntimeError):
        run_experiment(cfg, tmp_path / "out")
    assert not (tmp_path / "out").exists()
    assert list(tmp_path.iterdir()) == [tmp_path / "no_transfer.toml"]


# comparison

def fake_log(rewards, lengths, run_id="r", target="techno"):
    log = RunLog(config_snapshot={"run_id": run_id, "target_map": target})
    start = 0
    for i, (r, n) in enumerate(zip(rewards, lengths)):
        log.episodes.append(EpisodeLog(i, start, n, float(r), EndReason.COLLISION))
        start += n
    return log


def test_compare_reflexive(regime_runs):
    _, logs = regime_runs
    rows = compare_runs([logs["ttql"], logs["ttql"]])
    assert all(v == 0 for k, v in rows[1].items() if k.startswith("delta_"))


@given(st.lists(st.tuples(st.floats(-5, 5), st.integers(1, 50)), min_size=1, max_size=30))
def test_doubled_rewards_double_reward_columns(eps):
    rewards, lengths = zip(*eps)
    base = fake_log(rewards, lengths, "b")
    double = fake_log([2 * r for r in rewards], lengths, "a")
    a, b = compare_runs([double, base])
    assert a["total_reward"] == 2 * b["total_reward"]
    assert a["reward_auc"] == pytest.approx(2 * b["reward_auc"], rel=1e-12, abs=1e-9)
    assert a["episode_count"] == b["episode_count"] and a["final20_mean_length"] == b["final20_mean_length"]


def test_reward_auc_by_hand():
    # running total 0 -> 1 at t=2 -> 3 at t=5: 0.5*2*1 + 0.5*3*(1+3)
    assert reward_auc(fake_log([1.0, 2.0], [2, 3])) == pytest.approx(7.0)


def test_compare_mismatched_budget():
    with pytest.raises(BudgetMismatch):
        compare_runs([fake_log([1.0], [10]), fake_log([1.0], [11])])
    with pytest.raises(BudgetMismatch):
        compare_runs([fake_log([1.0], [10]), fake_log([1.0], [10], target="complex")])


def test_three_regime_table(regime_runs, tmp_path):
    _, logs = regime_runs
    rows = compare_runs([logs[r] for r in ("no_transfer", "warm_start", "ttql")])
    assert len(rows) == 3
    assert all(np.isfinite(row[m]) for row in rows for m in ("total_reward", "episode_count", "final20_mean_length", "reward_auc"))
    csv_path, txt_path = write_summary(rows, tmp_path / "summary")
    assert csv_path.read_text() == summary_csv(rows)
    lines = summary_table(rows).splitlines()
    assert len(lines) == 4 and len({len(line) for line in lines}) == 1


def test_summary_recomputable_from_csv(regime_runs):
    root, _ = regime_runs
    row = compare_runs([read_run(root / "ttql"), read_run(root / "ttql")])[0]
    eps = list(csv.DictReader(open(root / "ttql" / EPISODES_CSV)))
    assert row["total_reward"] == pytest.approx(sum(float(e["cumulative_reward"]) for e in eps), abs=1e-9)
    assert row["episode_count"] == len(eps)
    assert row["final20_mean_length"] == pytest.approx(np.mean([int(e["step_count"]) for e in eps[-20:]]))


# charts

SVG = "{http://www.w3.org/2000/svg}"


def polyline(svg_path, gid):
    root = ET.parse(svg_path).getroot()
    group = next(g for g in root.iter(f"{SVG}g") if g.get("id") == gid)
    d = next(group.iter(f"{SVG}path")).get("d").split()
    return [(float(d[i + 1]), float(d[i + 2])) for i in range(0, len(d), 3)]


def test_reward_chart_vertices(regime_runs, tmp_path):
    root, logs = regime_runs
    reward, _ = emit_charts(root / "ttql", tmp_path / "c")
    pts = polyline(reward, "reward-tiny-ttql-seed0")
    assert len(pts) == len(logs["ttql"].episodes)
    xs = [p[0] for p in pts]
    assert all(a <= b for a, b in zip(xs, xs[1:]))


def test_transfer_chart_zero_line(regime_runs, tmp_path):
    root, _ = regime_runs
    _, transfers = emit_charts(root / "no_transfer", tmp_path / "c")
    ys = {y for _, y in polyline(transfers, "transfers-tiny-no_transfer-seed0")}
    assert len(ys) == 1


def test_charts_cover_every_run(regime_runs, tmp_path):
    root, _ = regime_runs
    reward, transfers = emit_charts(root, tmp_path / "all")
    for regime in ("no_transfer", "warm_start", "ttql"):
        assert polyline(reward, f"reward-tiny-{regime}-seed0")
        assert polyline(transfers, f"transfers-tiny-{regime}-seed0")


def test_charts_are_byte_identical(regime_runs, tmp_path):
    root, _ = regime_runs
    a = emit_charts(root, tmp_path / "a")
    b = emit_charts(root, tmp_path / "b")
    assert all(Path(x).read_bytes() == Path(y).read_bytes() for x, y in zip(a, b))


def test_chart_without_logs(tmp_path):
    with pytest.raises(FileNotFoundError):
        emit_charts(tmp_path, tmp_path / "c")
