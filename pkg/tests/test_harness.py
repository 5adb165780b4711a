import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcris.env import MetricRow
from lcris.harness import cli, io
from lcris.harness.config import ConfigError, ExperimentConfig, from_dict, load_config, parse_seeds
from lcris.harness.runner import (
    MissingCheckpoint,
    aggregate,
    per_angle_series,
    run_eval,
    run_sweep,
    run_train,
    worker_count,
)

# one full -60..60 sweep at 3 m/s takes ~830 slots
FAST = {"env": {"episode_steps": 900, "state_channels": "columns"}, "scene": {"speed": 3.0}}


def fast_cfg(**extra):
    data = {k: dict(v) for k, v in FAST.items()}
    for k, v in extra.items():
        data.setdefault(k, {}).update(v)
    return from_dict(data)


# config

def test_empty_config_is_reference_setup():
    cfg = load_config(None)
    assert cfg == ExperimentConfig()
    assert cfg.reward.beta1 == 0.2 and cfg.reward.beta2 == 0.8
    assert cfg.lc.tau_down == 29e-3 and cfg.lc.tau_up == 9e-3
    assert cfg.env.episode_steps == 19328
    assert cfg.channel.bandwidth == 200e6
    assert len(cfg.run.seeds) == 350


def test_toml_roundtrip(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[scene]\nspeed = 3.0\n[run]\nseeds = "3..5"\n[agent]\nhidden = [8, 8]\n')
    cfg = load_config(path)
    assert cfg.scene.speed == 3.0
    assert cfg.run.seeds == (3, 4, 5)
    assert cfg.agent.hidden == (8, 8)


@pytest.mark.parametrize("data,match", [
    ({"bogus": {}}, "unknown config sections"),
    ({"scene": {"sped": 1.0}}, "unknown keys"),
    ({"scene": {"speed": -1.0}}, "scene"),
    ({"env": {"state_channels": "half"}}, "state_channels"),
    ({"run": {"seeds": "5..1"}}, "empty seed range"),
])
def test_config_errors(data, match):
    with pytest.raises(ConfigError, match=match):
        from_dict(data)


def test_config_missing_file_and_bad_toml(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[scene\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_slot_length_shared():
    cfg = from_dict({"lc": {"t_s": 5e-3}})
    assert cfg.scene.t_s == 5e-3


def test_parse_seeds():
    assert parse_seeds("0..3") == (0, 1, 2, 3)
    assert parse_seeds(7) == (7,)
    assert parse_seeds([1, 2]) == (1, 2)
    assert parse_seeds("4") == (4,)


def test_digest_changes_iff_config_changes():
    a, b = ExperimentConfig(), ExperimentConfig()
    assert a.digest() == b.digest()
    c = a.with_overrides(scene={"speed": 3.0})
    assert c.digest() != a.digest()
    assert c.with_overrides(scene={"speed": 1.5}).digest() == a.digest()


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("LCRIS_THREADS", "1")
    assert worker_count() == 1
    monkeypatch.setenv("LCRIS_THREADS", "x")
    with pytest.raises(ConfigError):
        worker_count()


# io

rows_strategy = st.lists(st.builds(
    MetricRow,
    run_id=st.integers(0, 1000), slot=st.integers(0, 10**5),
    angle=st.sampled_from([-60.0, 20.0, 60.0]),
    received_power_dbw=st.floats(-200, 0), snr_db=st.floats(-50, 80),
    t_c_ms=st.floats(0, 10), t_k_ms=st.floats(0, 10), rate_mbps=st.floats(0, 5000),
    controller=st.sampled_from(["ddpg", "optimal", "realistic"]),
    pass_index=st.integers(0, 20), arrival=st.booleans(),
), max_size=20)


@given(rows_strategy)
@settings(max_examples=30)
def test_csv_roundtrip_exact(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "m.csv"
    io.write_rows(path, rows)
    assert io.read_rows(path) == rows


def test_csv_header_fixed(tmp_path):
    path = io.write_rows(tmp_path / "m.csv", [])
    assert path.read_text().strip() == ",".join(io.ROW_FIELDS)
    path.write_text("a,b\n")
    with pytest.raises(ValueError, match="unexpected header"):
        io.read_rows(path)


def test_io_errors_name_path(tmp_path):
    with pytest.raises(OSError, match="nope"):
        io.read_rows(tmp_path / "nope.csv")


def test_manifest(tmp_path):
    cfg = ExperimentConfig()
    path = io.write_manifest(tmp_path / "m.json", cfg, (1, 2), {"controller": "optimal"})
    data = json.loads(path.read_text())
    assert data["config_sha256"] == cfg.digest()
    assert data["seeds"] == [1, 2]
    assert data["version"] == "0.1.0"
    assert data["controller"] == "optimal"


# aggregation

def _row(ctrl, run, angle, snr, arrival=True):
    return MetricRow(run, 0, angle, -90.0, snr, 0.0, 10.0, 1.0, ctrl, 0, arrival)


@given(st.lists(st.floats(-20, 60), min_size=1, max_size=30),
       st.lists(st.floats(-20, 60), min_size=1, max_size=30))
def test_aggregate_linearity(a, b):
    ra = [_row("x", 0, 20.0, v) for v in a]
    rb = [_row("x", 1, 20.0, v) for v in b]
    pooled = aggregate(ra + rb)
    merged = aggregate(ra) + aggregate(rb)
    key = ("x", "snr_db")
    assert merged.counts[key] == len(a) + len(b)
    assert pooled.mean(key) == pytest.approx(merged.mean(key))
    assert pooled.mean(key) == pytest.approx(np.mean(a + b))


def test_per_angle_uses_arrivals_only():
    rows = [_row("x", 0, 20.0, 10.0), _row("x", 0, 20.0, 99.0, arrival=False),
            _row("x", 0, 30.0, 20.0)]
    series = per_angle_series(rows)
    assert series[("x", "snr_db")] == [(20.0, 10.0), (30.0, 20.0)]


# runs

def test_optimal_eval_rows():
    rows = run_eval(fast_cfg(), "optimal", seeds=(0,), workers=1)
    assert len(rows) == 900
    assert {r.t_k_ms for r in rows} == {10.0}
    for r in rows:
        assert r.rate_mbps == pytest.approx(200 * np.log2(1 + 10 ** (r.snr_db / 10)), rel=1e-9)
    series = per_angle_series(rows)
    assert [a for a, _ in series[("optimal", "snr_db")]] == [-60, -50, -40, -30, -20,
                                                             20, 30, 40, 50, 60]


def test_eval_deterministic_and_parallel_merge():
    cfg = fast_cfg(env={"episode_steps": 60})
    serial = run_eval(cfg, "realistic", seeds=(0, 1), workers=1)
    pooled = run_eval(cfg, "realistic", seeds=(1, 0), workers=2)
    assert serial == pooled


def test_ddpg_eval_requires_checkpoint(tmp_path):
    with pytest.raises(MissingCheckpoint):
        run_eval(fast_cfg(), "ddpg", seeds=(0,), checkpoint=tmp_path / "none.npz")


def test_train_then_eval(tmp_path):
    cfg = fast_cfg(env={"episode_steps": 30},
                   agent={"episodes": 2, "hidden": [8], "batch_size": 8, "warmup_batches": 1})
    ck = tmp_path / "a.npz"
    result = run_train(cfg, checkpoint=ck)
    assert ck.exists() and len(result.curve) == 2
    rows = run_eval(cfg, "ddpg", seeds=(5,), checkpoint=ck, workers=1)
    assert len(rows) == 30 and {r.controller for r in rows} == {"ddpg"}
    resumed = run_train(replace(cfg, agent=replace(cfg.agent, episodes=3)), checkpoint=ck,
                        resume=True)
    assert resumed.curve[:2] == result.curve


def test_sweep_speed_rows():
    cfg = fast_cfg(env={"episode_steps": 20}, sweep={"controllers": ["optimal"]})
    table, rows = run_sweep(cfg, "speed", seeds=(0,), workers=1)
    assert {rec["value"] for rec in table} == {"1.5", "3"}
    assert len(rows) == 40


def test_sweep_empty_axis():
    cfg = fast_cfg(sweep={"speed": []})
    with pytest.raises(ConfigError, match="no values"):
        run_sweep(cfg, "speed", seeds=(0,))
    with pytest.raises(ConfigError):
        run_sweep(cfg, "colour", seeds=(0,))


# cli

def _write_fast(tmp_path, steps=40):
    path = tmp_path / "fast.toml"
    path.write_text(f'[env]\nepisode_steps = {steps}\nstate_channels = "columns"\n'
                    '[scene]\nspeed = 3.0\n')
    return path


def test_cli_baseline_byte_identical(tmp_path):
    cfg = _write_fast(tmp_path)
    for out in ("a", "b"):
        code = cli.main(["baseline", "--config", str(cfg), "--controller", "realistic",
                         "--seeds", "0..1", "--out", str(tmp_path / out)])
        assert code == 0
    a = (tmp_path / "a" / "realistic_metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "realistic_metrics.csv").read_bytes()
    manifest = json.loads((tmp_path / "a" / "realistic_metrics.manifest.json").read_text())
    assert manifest["seeds"] == [0, 1]


def test_cli_report_and_plotdata(tmp_path, capsys):
    cfg = _write_fast(tmp_path)
    cli.main(["eval", "--config", str(cfg), "--controller", "optimal", "--seed", "3",
              "--out", str(tmp_path), "--format", "plotdata"])
    assert (tmp_path / "optimal_metrics.dat").exists()
    assert cli.main(["report", "--out", str(tmp_path)]) == 0
    assert "optimal" in capsys.readouterr().out
    assert (tmp_path / "report.json").exists()


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[nope]\n")
    assert cli.main(["baseline", "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    assert cli.main(["eval", "--controller", "ddpg", "--seed", "0",
                     "--checkpoint", str(tmp_path / "missing.npz")]) == 2
    assert cli.main(["report", "--out", str(tmp_path)]) == 2


def test_cli_constraint_exit_code(tmp_path, monkeypatch):
    from lcris.lc_dynamics import ConstraintViolation

    def boom(*a, **k):
        raise ConstraintViolation("column 4: target outside reachable range")

    monkeypatch.setattr(cli, "run_eval", boom)
    assert cli.main(["baseline", "--config", str(_write_fast(tmp_path))]) == 3
