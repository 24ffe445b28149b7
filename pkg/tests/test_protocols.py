import math
from dataclasses import replace

import numpy as np
import pytest

from collabqoe import protocols
from collabqoe.data import GroupDataset, concat_train, split_train_test, synthesize_reference_groups
from collabqoe.errors import ConfigurationError, DataError, ShapeError, UnsupportedModelError, WorkerLostError
from collabqoe.metrics import roc_auc_scan
from collabqoe.network import ModelConfig, TrainReport, init_network, predict_proba, sgd_fit
from collabqoe.protocols import (
    ExperimentConfig,
    RoundMetrics,
    derive_seed,
    federated_average,
    federated_trial,
    fl_total_time,
    isolated_trial,
    prepare_groups,
    round_robin_trial,
    rrl_total_time,
    run_centralized,
    run_federated,
    run_isolated,
    run_round_robin,
    run_scenario,
)
from collabqoe.transport import WeightSnapshot
from collabqoe.tree import TreeConfig

FAST = ModelConfig(max_epochs=15)


@pytest.fixture(scope="module")
def groups():
    return synthesize_reference_groups(seed=1, sizes=(60, 50, 40))


def _snap(w, b, worker=1, bn=()):
    return WeightSnapshot(worker, 1, [(1, len(w))], w, b, bn)


class TestConfig:
    def test_defaults(self):
        assert ExperimentConfig("fl").scenario == "FL"
        assert ExperimentConfig("FL").n_rounds == 30
        assert ExperimentConfig("RRL").n_rounds == 1
        assert ExperimentConfig("FL").threshold(3) == 3
        assert list(ExperimentConfig("IL", repeats=3, base_seed=5).seeds) == [5, 6, 7]

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"scenario": "XX"},
            {"scenario": "FL", "rounds": 0},
            {"scenario": "FL", "k": 0},
            {"scenario": "IL", "repeats": 0},
            {"scenario": "IL", "clock": "sundial"},
            {"scenario": "FL", "saturation": "never"},
            {"scenario": "FL", "transport": "udp"},
            {"scenario": "IL", "model": "nn"},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(**kwargs)

    def test_k_above_workers(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig("FL", k=4).threshold(3)

    def test_derived_seeds_distinct(self):
        seeds = {derive_seed(0, tag, pos, r) for tag in (1, 2, 3) for pos in range(3) for r in range(30)}
        assert len(seeds) == 270


class TestTiming:
    def test_rrl_reference_figures(self):
        assert rrl_total_time([1.9, 0.3, 0.3]) == pytest.approx(2.5, abs=1e-12)

    def test_rrl_single(self):
        assert rrl_total_time([0.7]) == 0.7

    def test_rrl_accumulator(self):
        d = np.random.default_rng(0).uniform(0, 3, 10)
        total = 0.0
        for x in d:
            total += x
        assert rrl_total_time(d) == pytest.approx(total, abs=1e-12)

    def test_rrl_reports(self):
        r = TrainReport(0.1, 0.2, 3, wall_time=1.5)
        assert rrl_total_time([r, 0.5]) == 2.0

    @pytest.mark.parametrize("bad", [[], [1.0, -0.1]])
    def test_rrl_errors(self, bad):
        with pytest.raises(DataError):
            rrl_total_time(bad)

    def test_fl_single_round(self):
        assert fl_total_time([RoundMetrics(1, (0, 1, 2), (0.5,) * 3, (1.0, 2.0, 1.5))], 1) == 2.0

    def test_fl_reference_figures(self):
        rounds = [RoundMetrics(r, (0, 1, 2), (0.5,) * 3, (2.1, 2.69, 2.5)) for r in range(1, 31)]
        assert fl_total_time(rounds, 15) == pytest.approx(15 * 2.69)
        assert fl_total_time(rounds, 15) == pytest.approx(40.35)

    def test_fl_brute_force(self):
        t = np.random.default_rng(1).uniform(0, 5, (5, 3))
        rounds = [RoundMetrics(r + 1, (0, 1, 2), (0.5,) * 3, tuple(t[r])) for r in range(5)]
        for sat in range(1, 6):
            expected = 0.0
            for r in range(sat):
                expected += max(t[r])
            assert fl_total_time(rounds, sat) == pytest.approx(expected, abs=1e-12)

    def test_fl_errors(self):
        with pytest.raises(DataError):
            fl_total_time([], 1)
        with pytest.raises(DataError):
            fl_total_time([RoundMetrics(1, (0,), (0.5,), (1.0,))], 2)


class TestFederatedAverage:
    def test_single_is_identity(self):
        s = _snap([1.0, 2.0], [3.0, 4.0])
        assert federated_average([s]).weights.tobytes() == s.weights.tobytes()

    def test_hand_values(self):
        snaps = [_snap([1.0, 3.0], [0.0, 0.0]), _snap([3.0, 5.0], [0.0, 0.0]), _snap([5.0, 7.0], [0.0, 0.0])]
        np.testing.assert_array_equal(federated_average(snaps).weights, [3.0, 5.0])

    def test_symmetry(self):
        x = np.random.default_rng(0).normal(size=6)
        avg = federated_average([_snap(x[:3], x[3:]), _snap(-x[:3], -x[3:])])
        assert np.all(avg.weights == 0.0) and np.all(avg.biases == 0.0)

    def test_fixed_point(self):
        net = init_network(ModelConfig(), 3, 0)
        s = WeightSnapshot.from_network(net, 1, 4)
        avg = federated_average([s, s, s])
        assert avg.weights.tobytes() == s.weights.tobytes()
        assert avg.batchnorm_params.tobytes() == s.batchnorm_params.tobytes()

    def test_against_loop(self):
        rng = np.random.default_rng(2)
        snaps = [_snap(rng.normal(size=4), rng.normal(size=4), bn=rng.normal(size=16)) for _ in range(5)]
        avg = federated_average(snaps)
        for name in ("weights", "biases", "batchnorm_params"):
            got = getattr(avg, name)
            for i in range(got.size):
                total = 0.0
                for s in snaps:
                    total += getattr(s, name)[i]
                assert got[i] == pytest.approx(total / 5, abs=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        a = [rng.normal(size=3) for _ in range(2)]
        scaled = federated_average([_snap(2.5 * v, v) for v in a]).weights
        np.testing.assert_allclose(scaled, 2.5 * federated_average([_snap(v, v) for v in a]).weights, atol=1e-12)

    def test_weighted(self):
        avg = federated_average([_snap([0.0], [0.0]), _snap([4.0], [8.0])], weights=[3, 1])
        assert avg.weights[0] == 1.0 and avg.biases[0] == 2.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            federated_average([_snap([1.0], [1.0]), _snap([1.0, 2.0], [1.0, 2.0])])

    def test_empty(self):
        with pytest.raises(DataError):
            federated_average([])


class TestIsolated:
    def test_single_group_is_direct_composition(self, groups):
        cfg = ExperimentConfig("IL", FAST)
        result = run_isolated(groups[:1], cfg)
        (g,) = prepare_groups(groups[:1], cfg, 0)
        net = init_network(FAST, 3, derive_seed(0, protocols._INIT, 0))
        trained, _ = sgd_fit(net, g, FAST, derive_seed(0, protocols._FIT, 0, 1))
        expected = roc_auc_scan(predict_proba(trained, g.x_test)[:, 1], g.y_test)
        assert list(result.auc) == [("0", 0)]
        assert result.auc[("0", 0)].mean == expected
        assert result.auc[("0", 0)].n_runs == 1

    def test_matrix_shape(self, groups):
        result = run_isolated(groups, ExperimentConfig("IL", TreeConfig(2), repeats=3))
        assert sorted(result.auc) == [(str(a), b) for a in range(3) for b in range(3)]
        assert all(s.n_runs == 3 and 0 <= s.mean <= 1 for s in result.auc.values())
        assert set(result.timing) == {"total", "IL 0", "IL 1", "IL 2"}

    def test_per_worker_scaling(self, groups):
        (g,) = prepare_groups(groups[:1], ExperimentConfig("IL"), 0)
        assert g.x_train.min() == 0.0 and g.x_train.max() == 1.0


class TestCentralized:
    def test_needs_two_groups(self, groups):
        with pytest.raises(DataError):
            run_centralized(groups[:1], ExperimentConfig("CL", FAST))

    def test_pooled_rows(self):
        rng = np.random.default_rng(0)
        tiny = [GroupDataset(i, rng.uniform(size=(10, 3)), np.arange(10) % 2) for i in range(2)]
        prepared = prepare_groups(tiny, ExperimentConfig("CL"), 0)
        assert len(concat_train(prepared)) == 12

    def test_one_row_per_test_group(self, groups):
        result = run_centralized(groups, ExperimentConfig("CL", FAST, repeats=2))
        assert sorted(result.auc) == [("CL", 0), ("CL", 1), ("CL", 2)]


class TestRoundRobin:
    def test_tree_rejected(self, groups):
        with pytest.raises(UnsupportedModelError):
            run_round_robin(groups, ExperimentConfig("RRL", TreeConfig(2)))

    @pytest.mark.parametrize("seed", [0, 7])
    def test_ring_of_one(self, groups, seed):
        il = isolated_trial(groups[:1], ExperimentConfig("IL", FAST), seed)
        rrl = round_robin_trial(groups[:1], ExperimentConfig("RRL", FAST), seed)
        assert rrl.models["RRL"].equals(il.models["0"])

    def test_hand_off_order(self, groups, monkeypatch):
        calls = []
        real = protocols._train

        def spy(spec, start, data, seed, clock):
            model, secs = real(spec, start, data, seed, clock)
            calls.append((data.group_id, start, model))
            return model, secs

        monkeypatch.setattr(protocols, "_train", spy)
        same = [replace(groups[0], group_id=i) for i in range(2)]
        trial = round_robin_trial(same, ExperimentConfig("RRL", FAST, rounds=2), 3)
        assert [c[0] for c in calls] == [0, 1, 0, 1]
        # each worker starts from exactly what its predecessor produced
        assert calls[1][1].trainable().tobytes() == calls[0][2].trainable().tobytes()
        assert calls[2][1].trainable().tobytes() == calls[1][2].trainable().tobytes()
        assert trial.models["RRL"].equals(replace(calls[3][2], epoch_counter=2))
        assert [m.round_id for m in trial.round_metrics] == [1, 2]

    def test_total_time_is_sum(self, groups):
        t = round_robin_trial(groups, ExperimentConfig("RRL", FAST, clock="steps"), 0)
        assert t.total_time == rrl_total_time(w.seconds for w in t.worker_times)
        assert [w.worker for w in t.worker_times] == [0, 1, 2]

    def test_tcp_matches_inproc(self, groups):
        a = round_robin_trial(groups, ExperimentConfig("RRL", FAST, clock="steps"), 2)
        b = round_robin_trial(groups, ExperimentConfig("RRL", FAST, clock="steps", transport="tcp"), 2)
        assert a.models["RRL"].equals(b.models["RRL"])
        assert a.evaluations == b.evaluations


def _same_seed_for_every_worker(monkeypatch):
    real = protocols.derive_seed

    def shared(seed, *keys):
        if keys and keys[0] == protocols._FIT:
            keys = (keys[0], 0) + keys[2:]
        return real(seed, *keys)

    monkeypatch.setattr(protocols, "derive_seed", shared)


class TestFederated:
    def test_tree_rejected(self, groups):
        with pytest.raises(UnsupportedModelError):
            run_federated(groups, ExperimentConfig("FL", TreeConfig(2)))

    def test_identical_workers_are_a_fixed_point(self, groups, monkeypatch):
        _same_seed_for_every_worker(monkeypatch)
        seen = []
        real = protocols.federated_average

        def spy(snaps, weights=None):
            out = real(snaps, weights)
            seen.append((snaps, out))
            return out

        monkeypatch.setattr(protocols, "federated_average", spy)
        base = split_train_test(groups[0], seed=0)
        same = [replace(base, group_id=i) for i in range(3)]
        cfg = ExperimentConfig("FL", FAST, rounds=3, resplit=False, saturation="pooled")
        federated_trial(same, cfg, 0)
        assert len(seen) == 3
        for snaps, out in seen:
            for s in snaps:
                assert out.weights.tobytes() == s.weights.tobytes()
                assert out.batchnorm_params.tobytes() == s.batchnorm_params.tobytes()

    def test_rounds_and_evaluations(self, groups):
        cfg = ExperimentConfig("FL", FAST, rounds=4, saturation="pooled", clock="steps")
        t = federated_trial(groups, cfg, 0)
        assert len(t.round_metrics) == len(t.broadcasts) == len(t.round_evaluations) == 4
        assert [b.round_id for b in t.broadcasts] == [1, 2, 3, 4]
        assert t.final_round == 4 and t.saturated is False
        assert t.total_time == fl_total_time(t.round_metrics, 4)
        assert [e.auc for e in t.evaluations] == list(t.round_evaluations[3])

    def test_trial_saturation_stops_early(self, groups):
        cfg = ExperimentConfig("FL", FAST, rounds=10, window=2, epsilon=1.0, clock="steps")
        t = federated_trial(groups, cfg, 0)
        assert len(t.round_metrics) == 3
        assert (t.final_round, t.saturated) == (1, True)
        assert t.total_time == t.round_metrics[0].max_time

    def test_pooled_saturation(self, groups):
        cfg = ExperimentConfig("FL", FAST, rounds=4, repeats=2, window=2, epsilon=1.0, saturation="pooled")
        result = run_federated(groups, cfg)
        assert all(t.final_round == 1 and t.saturated for t in result.trials)
        assert result.saturation_round.mean == 1.0

    def test_threshold_below_workers(self, groups):
        cfg = ExperimentConfig("FL", FAST, rounds=2, k=2, saturation="pooled")
        t = federated_trial(groups, cfg, 0)
        assert all(len(m.workers) == 2 for m in t.round_metrics)

    def test_worker_failure_names_worker(self, groups, monkeypatch):
        real = protocols._train

        def flaky(spec, start, data, seed, clock):
            if data.group_id == 1:
                raise RuntimeError("disk on fire")
            return real(spec, start, data, seed, clock)

        monkeypatch.setattr(protocols, "_train", flaky)
        with pytest.raises(WorkerLostError) as info:
            federated_trial(groups, ExperimentConfig("FL", FAST, rounds=2, timeout=20), 0)
        assert info.value.worker == 1
        assert "disk on fire" in str(info.value)

    def test_deterministic_and_transport_independent(self, groups):
        cfg = ExperimentConfig("FL", FAST, rounds=3, saturation="pooled", clock="steps")
        a = federated_trial(groups, cfg, 5)
        b = federated_trial(groups, cfg, 5)
        c = federated_trial(groups, replace(cfg, transport="tcp"), 5)
        for other in (b, c):
            assert [x == y for x, y in zip(a.broadcasts, other.broadcasts)] == [True] * 3
            assert a.evaluations == other.evaluations


class TestRunScenario:
    def test_failures_recorded(self, groups, monkeypatch):
        real = protocols.run_trial

        def sometimes(gs, config, seed):
            if seed == 1:
                raise DataError("bad seed")
            return real(gs, config, seed)

        monkeypatch.setattr(protocols, "run_trial", sometimes)
        cfg = ExperimentConfig("IL", TreeConfig(2), repeats=3)
        result = run_scenario(groups, cfg, keep_going=True)
        assert [s for s, _ in result.failures] == [1]
        assert all(s.n_runs == 2 for s in result.auc.values())
        with pytest.raises(DataError):
            run_scenario(groups, cfg)

    def test_parallel_matches_serial(self, groups):
        cfg = ExperimentConfig("RRL", FAST, repeats=3, clock="steps")
        serial = run_scenario(groups, cfg)
        parallel = run_scenario(groups, cfg, jobs=2)
        assert serial.auc == parallel.auc
        assert [t.seed for t in parallel.trials] == [0, 1, 2]

    def test_auc_summary_matches_mean_ci(self, groups):
        from collabqoe.metrics import mean_ci

        result = run_scenario(groups, ExperimentConfig("CL", FAST, repeats=4, clock="steps"))
        for key, summary in result.auc.items():
            values = [e.auc for t in result.trials for e in t.evaluations if (e.train_group, e.test_group) == key]
            assert summary == mean_ci(values)
