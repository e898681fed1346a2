import json
import math
import os
from dataclasses import replace

import numpy as np
import pytest

from edgebid.baselines import DqnConfig, SibConfig
from edgebid.config import ConfigError, default_system_config, snr_for_feasibility
from edgebid.env import payload_bits
from edgebid.harness import (
    BUDGET_COLUMNS,
    TRADEOFF_COLUMNS,
    ExperimentConfig,
    MetricsRecord,
    MetricsWriter,
    SibPolicy,
    calibrate_snr,
    config_from_dict,
    config_to_dict,
    default_experiment_config,
    evaluate_policy,
    evaluate_run,
    load_config,
    metrics_header,
    read_metrics,
    run_budget_sweep,
    run_dir,
    run_policy_episode,
    run_tradeoff_sweep,
    run_train,
    save_config,
    train_one,
    validate_experiment_config,
)
from edgebid.maddpg import TrainConfig
from edgebid.surrogate import CalibrationError


def micro_exp(**over):
    base = dict(
        system=default_system_config(),
        train=TrainConfig(episodes=4, batch_episodes=2, buffer_capacity=8, hidden=(6,)),
        dqn=DqnConfig(episodes=3, batch_size=8, replay_capacity=200, hidden=(8,), eps_decay_episodes=2),
        sib=SibConfig(),
        seeds=(1,),
        eval_episodes=3,
    )
    base.update(over)
    return ExperimentConfig(**base)


class TestConfigIO:
    def test_round_trip_identity(self):
        cfg = default_experiment_config()
        d = config_to_dict(cfg)
        assert config_to_dict(config_from_dict(d)) == d

    def test_yaml_file_round_trip(self, tmp_path):
        path = tmp_path / "exp.yaml"
        cfg = default_experiment_config()
        save_config(cfg, path)
        assert config_to_dict(load_config(path)) == config_to_dict(cfg)

    def test_empty_config_is_all_defaults(self):
        assert config_to_dict(config_from_dict({})) == config_to_dict(default_experiment_config())

    @pytest.mark.parametrize(
        "data",
        [
            {"bogus": {}},
            {"system": {"bogus": 1}},
            {"train": {"nope": 2}},
            {"dqn": {"gamma": 0.9}},
            {"experiment": {"seed": 1}},
            {"system": {"devices": [{"index": 1, "feature_dims": 8, "payload": 2}]}},
        ],
    )
    def test_unknown_keys_rejected(self, data):
        with pytest.raises(ConfigError):
            config_from_dict(data)

    def test_type_errors_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"system": {"horizon": "ten"}})
        with pytest.raises(ConfigError):
            config_from_dict({"system": {"device_count": True}})

    def test_device_entries_fill_snr_and_calibration(self):
        cfg = config_from_dict(
            {
                "system": {
                    "devices": [
                        {
                            "index": 1,
                            "feature_dims": 64,
                            "bits_per_dim": 8,
                            "ratio_set": [1.0, 0.5],
                            "initial_budget": 10.0,
                            "class_count": 10,
                        }
                    ]
                }
            }
        )
        md = cfg.system.devices[0]
        assert cfg.system.device_count == 1
        want = snr_for_feasibility(payload_bits(1.0, 64, 8), cfg.system.symbol_budget)
        assert md.mean_snr == pytest.approx(want)
        assert md.surrogate.calibrated

    def test_default_snr_matches_closed_form(self):
        cfg = default_experiment_config()
        for md in cfg.system.devices:
            want = snr_for_feasibility(
                payload_bits(1.0, md.feature_dims, md.bits_per_dim), cfg.system.symbol_budget
            )
            assert md.mean_snr == pytest.approx(want, rel=1e-12)

    def test_device_requires_index_and_dims(self):
        with pytest.raises(ConfigError):
            config_from_dict({"system": {"devices": [{"feature_dims": 8}]}})

    def test_zero_budget_split_rejected_at_load(self):
        with pytest.raises(ConfigError):
            config_from_dict({"experiment": {"budget_splits": [0.0, 5.0]}})

    def test_total_budget_split_rejected_at_load(self):
        with pytest.raises(ConfigError):
            config_from_dict({"experiment": {"budget_splits": [10.0]}})

    @pytest.mark.parametrize(
        "over",
        [
            {"algo": "sgd"},
            {"seeds": ()},
            {"eval_episodes": -1},
            {"tradeoff_pairs": ((0.0, 1.0),)},
            {"tradeoff_algos": ("maddpg", "ppo")},
            {"budget_weights": (0.9,)},
        ],
    )
    def test_validate_rejects_bad_experiments(self, over):
        with pytest.raises(ConfigError):
            validate_experiment_config(micro_exp(**over))

    def test_validate_rejects_bad_sib(self):
        with pytest.raises(ConfigError):
            validate_experiment_config(micro_exp(sib=SibConfig(target_ssim=0.0)))
        with pytest.raises(ConfigError):
            validate_experiment_config(micro_exp(sib=SibConfig(bid=-1.0)))


RECORDS = [
    MetricsRecord(0, (-1.0, -2.5), (0.5, 0.6), (0.26, 0.3), (1.25, 0.0), (3, 0)),
    MetricsRecord(1, (-0.75, -2.0), (0.7, 0.4), (0.0, 0.6), (0.0, 2.5), (0, 5)),
]


class TestMetrics:
    def test_header_layout(self):
        assert metrics_header(2) == [
            "episode",
            "reward_md1", "reward_md2",
            "accuracy_md1", "accuracy_md2",
            "ssim_md1", "ssim_md2",
            "spend_md1", "spend_md2",
            "served_md1", "served_md2",
        ]

    def test_write_read_round_trip(self, tmp_path):
        path = tmp_path / "m.csv"
        w = MetricsWriter(path, 2)
        for rec in RECORDS:
            w.write(rec)
        w.close()
        data = read_metrics(path)
        assert np.array_equal(data["episode"], [0, 1])
        assert np.array_equal(data["reward_md2"], [-2.5, -2.0])
        assert np.array_equal(data["ssim_md1"], [0.26, 0.0])
        assert np.array_equal(data["served_md2"], [0, 5])

    def test_rewrite_is_byte_identical(self, tmp_path):
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for path in paths:
            w = MetricsWriter(path, 2)
            for rec in RECORDS:
                w.write(rec)
            w.close()
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestRunTrain:
    def test_maddpg_artifacts(self, tmp_path):
        exp = micro_exp()
        summaries = run_train(exp, algo="maddpg", seeds=(1,), out_root=tmp_path)
        d = run_dir(tmp_path, "maddpg", 1)
        rows = read_metrics(os.path.join(d, "metrics.csv"))
        assert len(rows["episode"]) == exp.train.episodes
        ckpts = sorted(os.listdir(os.path.join(d, "checkpoints")))
        assert ckpts == [
            "actor_md1.json", "actor_md2.json",
            "critic_md1.json", "critic_md2.json",
            "target_actor_md1.json", "target_actor_md2.json",
            "target_critic_md1.json", "target_critic_md2.json",
        ]
        with open(os.path.join(d, "summary.json")) as fh:
            summary = json.load(fh)
        assert summary["algo"] == "maddpg" and summary["seed"] == 1
        assert summary["episodes"] == exp.train.episodes
        assert len(summary["mean_reward_last_100"]) == 2
        for tag in ("md1", "md2"):
            assert summary["calibration"][tag]["ssim_at_min_ratio"] <= 0.26
        assert summaries[0]["algo"] == "maddpg"

    def test_sib_has_no_checkpoints(self, tmp_path):
        exp = micro_exp()
        run_train(exp, algo="sib", seeds=(1,), out_root=tmp_path)
        d = run_dir(tmp_path, "sib", 1)
        assert not os.path.isdir(os.path.join(d, "checkpoints"))
        rows = read_metrics(os.path.join(d, "metrics.csv"))
        assert len(rows["episode"]) == exp.train.episodes

    def test_dqn_checkpoint(self, tmp_path):
        exp = micro_exp()
        run_train(exp, algo="dqn", seeds=(2,), out_root=tmp_path)
        d = run_dir(tmp_path, "dqn", 2)
        assert os.path.isfile(os.path.join(d, "checkpoints", "dqn.json"))
        rows = read_metrics(os.path.join(d, "metrics.csv"))
        assert len(rows["episode"]) == exp.dqn.episodes

    def test_same_seed_byte_identical(self, tmp_path):
        exp = micro_exp()
        for sub in ("a", "b"):
            run_train(exp, algo="maddpg", seeds=(3,), out_root=tmp_path / sub)
        a = (tmp_path / "a" / "maddpg" / "seed_3" / "metrics.csv").read_bytes()
        b = (tmp_path / "b" / "maddpg" / "seed_3" / "metrics.csv").read_bytes()
        assert a == b

    def test_seed_isolation(self, tmp_path):
        exp = micro_exp()
        run_train(exp, algo="sib", seeds=(1,), out_root=tmp_path / "solo")
        run_train(exp, algo="sib", seeds=(1, 2), out_root=tmp_path / "both")
        a = (tmp_path / "solo" / "sib" / "seed_1" / "metrics.csv").read_bytes()
        b = (tmp_path / "both" / "sib" / "seed_1" / "metrics.csv").read_bytes()
        assert a == b

    def test_unknown_algo_rejected(self):
        with pytest.raises(ConfigError):
            train_one(micro_exp(), "a2c", 1)


class TestEvaluate:
    def test_summary_structure(self, tmp_path):
        exp = micro_exp()
        run_train(exp, algo="maddpg", seeds=(1,), out_root=tmp_path)
        summary = evaluate_run(exp, "maddpg", 1, ckpt_dir=run_dir(tmp_path, "maddpg", 1))
        assert summary["episodes"] == exp.eval_episodes
        assert len(summary["per_device"]) == 2
        for d in summary["per_device"]:
            assert 0.0 <= d["accuracy_mean"] <= 1.0
            assert 0.0 <= d["ssim_mean"] <= 1.0
            assert 0.0 <= d["serve_rate"] <= 1.0
            assert d["served_slots"] >= 0

    def test_zero_episodes_no_data_marker(self):
        summary = evaluate_run(micro_exp(), "sib", 1, episodes=0)
        assert summary == {"episodes": 0, "note": "no data"}

    def test_dt_eval_ssim_constant(self, tmp_path):
        exp = micro_exp()
        run_train(exp, algo="maddpg-dt", seeds=(1,), out_root=tmp_path)
        summary = evaluate_run(
            exp, "maddpg-dt", 1, ckpt_dir=run_dir(tmp_path, "maddpg-dt", 1), episodes=5
        )
        for d in summary["per_device"]:
            if d["served_slots"]:
                assert d["ssim_std"] <= 1e-9
                assert d["ssim_mean"] == pytest.approx(0.6)

    def test_architecture_mismatch_raises(self, tmp_path):
        exp = micro_exp()
        run_train(exp, algo="maddpg", seeds=(1,), out_root=tmp_path)
        wrong = micro_exp(train=replace(exp.train, hidden=(12,)))
        with pytest.raises(ConfigError):
            evaluate_run(wrong, "maddpg", 1, ckpt_dir=run_dir(tmp_path, "maddpg", 1))

    def test_learned_policy_needs_checkpoint(self):
        with pytest.raises(ConfigError):
            evaluate_run(micro_exp(), "maddpg", 1)

    def test_dqn_eval_from_checkpoint(self, tmp_path):
        exp = micro_exp()
        run_train(exp, algo="dqn", seeds=(1,), out_root=tmp_path)
        summary = evaluate_run(exp, "dqn", 1, ckpt_dir=run_dir(tmp_path, "dqn", 1), episodes=2)
        assert summary["episodes"] == 2

    def test_eval_deterministic_per_seed(self):
        exp = micro_exp()
        policy = SibPolicy(exp.system, exp.sib)
        a = evaluate_policy(exp.system, policy, 4, seed=9)
        b = evaluate_policy(exp.system, policy, 4, seed=9)
        assert a == b

    def test_sib_policy_clips_to_budget(self):
        exp = micro_exp(sib=SibConfig(bid=0.9))
        policy = SibPolicy(exp.system, exp.sib)
        act = policy.action(0, np.zeros(4), budget=0.2)
        assert act.bid == pytest.approx(0.2)

    def test_sib_rollout_respects_budget_chain(self):
        exp = micro_exp()
        from edgebid.env import CoopInferenceEnv
        from edgebid.harness import eval_rng

        env = CoopInferenceEnv(exp.system, eval_rng(3))
        ep = run_policy_episode(env, SibPolicy(exp.system, exp.sib))
        for k in range(2):
            assert np.all(ep.obs[k, :, 2] >= ep.bids[k] - 1e-12)


class TestSweeps:
    def test_tradeoff_rows_and_file(self, tmp_path):
        exp = micro_exp(eval_episodes=2)
        pairs = ((0.2, 0.8), (0.9, 0.1))
        rows = run_tradeoff_sweep(
            exp, out_dir=tmp_path, algos=("sib", "maddpg"), pairs=pairs, seeds=(1,)
        )
        assert len(rows) == 2 * 2 * 1 * 2
        for row in rows:
            assert set(row) == set(TRADEOFF_COLUMNS)
        with open(tmp_path / "tradeoff.csv") as fh:
            header = fh.readline().strip().split(",")
            lines = fh.readlines()
        assert header == list(TRADEOFF_COLUMNS)
        assert len(lines) == len(rows)

    def test_dt_ssim_constant_across_pairs(self, tmp_path):
        exp = micro_exp(eval_episodes=2)
        rows = run_tradeoff_sweep(
            exp, out_dir=tmp_path, algos=("maddpg-dt",),
            pairs=((0.2, 0.8), (0.9, 0.1)), seeds=(1,),
        )
        for device in (1, 2):
            vals = {row["ssim"] for row in rows if row["device"] == device and row["serve_rate"] > 0}
            assert len(vals) <= 1

    def test_sweep_rerun_is_byte_identical(self, tmp_path):
        exp = micro_exp(eval_episodes=2)
        for sub in ("a", "b"):
            run_tradeoff_sweep(
                exp, out_dir=tmp_path / sub, algos=("sib",), pairs=((0.2, 0.8),), seeds=(1, 2)
            )
        assert (tmp_path / "a" / "tradeoff.csv").read_bytes() == (
            tmp_path / "b" / "tradeoff.csv"
        ).read_bytes()

    def test_budget_rows(self, tmp_path):
        exp = micro_exp(eval_episodes=2)
        rows = run_budget_sweep(exp, out_dir=tmp_path, splits=(2.0, 5.0), seeds=(1,))
        assert len(rows) == 2 * 1 * 2
        assert {row["split"] for row in rows} == {2.0, 5.0}
        for row in rows:
            assert set(row) == set(BUDGET_COLUMNS)
        assert (tmp_path / "budget.csv").is_file()

    def test_budget_sweep_rejects_bad_split(self):
        with pytest.raises(ConfigError):
            run_budget_sweep(micro_exp(), splits=(10.0,), seeds=(1,))

    def test_budget_sweep_needs_two_devices(self):
        exp = micro_exp()
        one = config_from_dict(
            {
                "system": {
                    "devices": [
                        {"index": 1, "feature_dims": 64, "ratio_set": [1.0, 0.4],
                         "initial_budget": 10.0}
                    ]
                }
            }
        )
        with pytest.raises(ConfigError):
            run_budget_sweep(replace(exp, system=one.system), splits=(1.0,), seeds=(1,))


class TestCalibrateSnr:
    def test_median_target_matches_closed_form(self):
        cfg = default_system_config()
        out = calibrate_snr(cfg, 0.5, mc_samples=200_000)
        for md in cfg.devices:
            payload = payload_bits(1.0, md.feature_dims, md.bits_per_dim)
            want = snr_for_feasibility(payload, cfg.symbol_budget, 0.5)
            assert out[md.index] == pytest.approx(want, rel=0.02)
            # exact feasibility at the solved point honors the MC tolerance
            factor = 2.0 ** (payload / cfg.symbol_budget) - 1.0
            assert abs(math.exp(-factor / out[md.index]) - 0.5) < 0.01

    def test_unattainable_target_raises(self):
        with pytest.raises(CalibrationError):
            calibrate_snr(default_system_config(), 0.999, mc_samples=20_000, snr_cap=1e3)

    def test_target_outside_unit_interval_raises(self):
        with pytest.raises(CalibrationError):
            calibrate_snr(default_system_config(), 1.0)
        with pytest.raises(CalibrationError):
            calibrate_snr(default_system_config(), 0.0)

    def test_larger_payload_needs_more_snr(self):
        cfg = default_system_config()
        doubled = replace(
            cfg,
            devices=[replace(cfg.devices[0], feature_dims=2 * cfg.devices[0].feature_dims)]
            + list(cfg.devices[1:]),
        )
        base = calibrate_snr(cfg, 0.5, mc_samples=20_000)
        more = calibrate_snr(doubled, 0.5, mc_samples=20_000)
        assert more[1] > base[1]


class TestCli:
    def test_train_eval_cycle(self, tmp_path, capsys):
        from edgebid.cli import main

        cfg_path = tmp_path / "exp.yaml"
        save_config(micro_exp(), cfg_path)
        rc = main(
            ["train", "--config", str(cfg_path), "--algo", "sib", "--seed", "1",
             "--out", str(tmp_path / "runs")]
        )
        assert rc == 0
        assert (tmp_path / "runs" / "sib" / "seed_1" / "metrics.csv").is_file()
        capsys.readouterr()
        rc = main(
            ["eval", "--config", str(cfg_path), "--algo", "sib", "--seed", "1",
             "--episodes", "2"]
        )
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["episodes"] == 2

    def test_missing_config_fails_cleanly(self, tmp_path, capsys):
        from edgebid.cli import main

        rc = main(["train", "--config", str(tmp_path / "nope.yaml")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_invalid_config_fails_cleanly(self, tmp_path, capsys):
        from edgebid.cli import main

        path = tmp_path / "bad.yaml"
        path.write_text("system:\n  horizon: -3\n")
        rc = main(["train", "--config", str(path)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_calibrate_snr_subcommand(self, capsys):
        from edgebid.cli import main

        rc = main(["calibrate-snr", "--target", "0.5", "--samples", "20000"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert set(out) == {"md1", "md2"}

    def test_sweep_tradeoff_subcommand(self, tmp_path, capsys):
        from edgebid.cli import main

        cfg_path = tmp_path / "exp.yaml"
        save_config(
            micro_exp(eval_episodes=2, tradeoff_pairs=((0.2, 0.8),), tradeoff_algos=("sib",)),
            cfg_path,
        )
        rc = main(
            ["sweep-tradeoff", "--config", str(cfg_path), "--seed", "1",
             "--out", str(tmp_path / "sweep")]
        )
        assert rc == 0
        assert (tmp_path / "sweep" / "tradeoff.csv").is_file()
