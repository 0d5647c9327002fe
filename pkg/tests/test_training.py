"""Protocol tests: split, optimizer, schedule, stopping, metrics, runs."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmfuse.autodiff import Tensor
from mmfuse.data import UtteranceRecord
from mmfuse.errors import ConfigError, DataError, NumericError
from mmfuse import training as tr


def make_records(rng, n_per_class, d_t=4, d_a=3, prefix="r"):
    records = []
    for label in (0, 1):
        for i in range(n_per_class):
            records.append(UtteranceRecord(
                id=f"{prefix}-{label}-{i:03d}", label=label,
                text_embedding=rng.normal(size=d_t).astype(np.float32),
                chunks=[rng.normal(size=(3, d_a)).astype(np.float32)],
            ))
    return records


def tiny_config(**overrides):
    base = dict(runs=1, batch_size=4, max_epochs=2, proj_dim=6, asp_hidden=4,
                fusion_hidden=4, mine_hidden=5, mfb_factor=2, mfh_blocks=2)
    base.update(overrides)
    return tr.TrainConfig(**base)


class TestTrainConfig:
    def test_defaults_match_protocol(self):
        config = tr.TrainConfig()
        assert config.runs == 5
        assert config.batch_size == 8
        assert config.patience == 8
        assert config.step_size == 4
        assert config.gamma == 0.1
        assert config.lambda_mi == 0.25
        assert config.split_train_frac == 0.65

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            tr.TrainConfig.from_dict({"learning_rate": 0.1})

    @pytest.mark.parametrize("bad", [
        {"split_train_frac": 1.0},
        {"split_train_frac": 0.0},
        {"patience": 0},
        {"gamma": 0.0},
        {"gamma": 1.5},
        {"lambda_mi": -0.1},
        {"negative_sampling": "bogus"},
    ])
    def test_invalid_values_rejected(self, bad):
        with pytest.raises(ConfigError):
            tr.TrainConfig.from_dict(bad)


class TestStratifiedSplit:
    def test_balanced_counts(self, rng):
        records = make_records(rng, 54)
        train, val = tr.stratified_split(records, 0.65, seed=0)
        train_labels = [r.label for r in train]
        val_labels = [r.label for r in val]
        assert train_labels.count(0) == train_labels.count(1) == 35
        assert val_labels.count(0) == val_labels.count(1) == 19

    def test_full_fraction_rejected(self, rng):
        records = make_records(rng, 4)
        with pytest.raises(ConfigError):
            tr.stratified_split(records, 1.0, seed=0)

    def test_deterministic_given_seed(self, rng):
        records = make_records(rng, 10)
        a_train, a_val = tr.stratified_split(records, 0.65, seed=9)
        b_train, b_val = tr.stratified_split(records, 0.65, seed=9)
        assert [r.id for r in a_train] == [r.id for r in b_train]
        assert [r.id for r in a_val] == [r.id for r in b_val]

    def test_different_seeds_differ(self, rng):
        records = make_records(rng, 20)
        a_train, _ = tr.stratified_split(records, 0.65, seed=1)
        b_train, _ = tr.stratified_split(records, 0.65, seed=2)
        assert [r.id for r in a_train] != [r.id for r in b_train]

    def test_missing_class_rejected(self, rng):
        records = [r for r in make_records(rng, 4) if r.label == 1]
        with pytest.raises(DataError):
            tr.stratified_split(records, 0.65, seed=0)

    def test_no_overlap_and_complete(self, rng):
        records = make_records(rng, 7)
        train, val = tr.stratified_split(records, 0.65, seed=3)
        ids = {r.id for r in train} | {r.id for r in val}
        assert len(train) + len(val) == len(records)
        assert ids == {r.id for r in records}


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = Tensor([1.0, 2.0], requires_grad=True)
        named = {"p": p}
        state = tr.AdamState(named)
        p.grad = np.zeros(2)
        tr.adam_step(named, state, lr=0.1)
        np.testing.assert_array_equal(p.data, [1.0, 2.0])

    def test_first_step_closed_form(self):
        p = Tensor([0.0], requires_grad=True)
        named = {"p": p}
        state = tr.AdamState(named)
        p.grad = np.array([1.0])
        lr = 0.05
        tr.adam_step(named, state, lr=lr)
        np.testing.assert_allclose(p.data, [-lr], rtol=1e-7)

    def test_bitwise_deterministic(self, rng):
        def run():
            p = Tensor([0.3, -0.7], requires_grad=True)
            named = {"p": p}
            state = tr.AdamState(named)
            for step in range(5):
                p.grad = np.array([0.1 * (step + 1), -0.2])
                tr.adam_step(named, state, lr=0.01)
            return p.data.copy()

        assert np.array_equal(run(), run())

    def test_non_finite_gradient_aborts(self):
        p = Tensor([1.0], requires_grad=True)
        named = {"p": p}
        state = tr.AdamState(named)
        p.grad = np.array([np.nan])
        with pytest.raises(NumericError):
            tr.adam_step(named, state, lr=0.1)


class TestStepLr:
    def test_schedule_values(self):
        for epoch in range(4):
            assert tr.step_lr(1e-4, epoch, 4, 0.1) == 1e-4
        np.testing.assert_allclose(tr.step_lr(1e-4, 4, 4, 0.1), 1e-5)
        np.testing.assert_allclose(tr.step_lr(1e-4, 8, 4, 0.1), 1e-6)

    def test_gamma_one_is_constant(self):
        assert all(tr.step_lr(0.3, e, 4, 1.0) == 0.3 for e in range(20))

    @given(st.integers(0, 200), st.integers(1, 10))
    @settings(max_examples=50, deadline=None)
    def test_non_increasing(self, epoch, step_size):
        lr_now = tr.step_lr(1.0, epoch, step_size, 0.5)
        lr_next = tr.step_lr(1.0, epoch + 1, step_size, 0.5)
        assert lr_next <= lr_now


class TestEarlyStopper:
    def test_protocol_stream(self):
        losses = [1.0, 0.9] + [0.95] * 8
        stop_epoch, best_epoch = tr.simulate_early_stopping(losses, patience=8)
        assert stop_epoch == 10
        assert best_epoch == 2

    def test_strictly_decreasing_never_stops(self):
        losses = [1.0 / (i + 1) for i in range(50)]
        stop_epoch, best_epoch = tr.simulate_early_stopping(losses, patience=8)
        assert stop_epoch is None
        assert best_epoch == 50

    def test_tie_counts_as_no_improvement(self):
        losses = [0.5] + [0.5] * 3
        stop_epoch, best_epoch = tr.simulate_early_stopping(losses, patience=3)
        assert stop_epoch == 4
        assert best_epoch == 1

    @given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=60),
           st.integers(1, 8))
    @settings(max_examples=80, deadline=None)
    def test_stop_gap_at_least_patience(self, losses, patience):
        stop_epoch, best_epoch = tr.simulate_early_stopping(losses, patience)
        if stop_epoch is not None:
            assert stop_epoch - best_epoch >= patience


class TestMetrics:
    def test_perfect_classifier(self):
        metrics = tr.compute_metrics(tr.ConfusionMatrix(tp=24, tn=24))
        for name in tr.METRIC_NAMES:
            assert metrics[name] == 100.0

    def test_reference_matrix(self):
        metrics = tr.compute_metrics(tr.ConfusionMatrix(tp=21, fp=4, tn=20, fn=3))
        np.testing.assert_allclose(metrics["precision"], 84.00, atol=5e-3)
        np.testing.assert_allclose(metrics["recall"], 87.50, atol=5e-3)
        np.testing.assert_allclose(metrics["f1"], 85.71, atol=5e-3)
        np.testing.assert_allclose(metrics["accuracy"], 85.42, atol=5e-3)
        np.testing.assert_allclose(metrics["specificity"], 83.33, atol=5e-3)

    def test_zero_denominator_warns(self):
        metrics = tr.compute_metrics(tr.ConfusionMatrix(tn=5, fn=2))
        assert metrics["precision"] == 0.0
        assert "precision" in metrics["warnings"]

    def test_empty_matrix_rejected(self):
        with pytest.raises(DataError):
            tr.compute_metrics(tr.ConfusionMatrix())

    @given(st.integers(1, 40), st.integers(0, 40), st.integers(1, 40),
           st.integers(0, 40))
    @settings(max_examples=80, deadline=None)
    def test_accuracy_between_recall_and_specificity(self, tp, fp, tn, fn):
        metrics = tr.compute_metrics(tr.ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn))
        lo = min(metrics["recall"], metrics["specificity"])
        hi = max(metrics["recall"], metrics["specificity"])
        assert lo - 1e-9 <= metrics["accuracy"] <= hi + 1e-9

    @given(st.integers(1, 30), st.integers(0, 30))
    @settings(max_examples=40, deadline=None)
    def test_f1_equals_accuracy_on_symmetric_matrix(self, tp, fp):
        metrics = tr.compute_metrics(
            tr.ConfusionMatrix(tp=tp, fp=fp, tn=tp, fn=fp)
        )
        np.testing.assert_allclose(metrics["f1"], metrics["accuracy"], atol=1e-9)


class TestRuns:
    def test_single_run_trains_and_reports(self, rng):
        records = make_records(rng, 8)
        config = tiny_config(max_epochs=3)
        train, val = tr.stratified_split(records, 0.65, seed=0)
        result = tr.train_single_run(train, val, [], config, seed=0)
        assert result.epochs >= 1
        assert set(tr.METRIC_NAMES) <= set(result.val_metrics)
        assert result.test_metrics is None

    def test_multi_run_single_seed_zero_std(self, rng):
        records = make_records(rng, 8)
        test_records = make_records(rng, 3, prefix="t")
        config = tiny_config(runs=1)
        report = tr.multi_run(records, test_records, config)
        assert len(report["per_run"]) == 1
        for name in tr.METRIC_NAMES:
            assert report["aggregate"][name]["std"] == 0.0
        assert report["partial"] is False

    def test_reports_are_byte_identical(self, rng):
        records = make_records(rng, 8)
        test_records = make_records(rng, 3, prefix="t")
        config = tiny_config(runs=2, max_epochs=2)
        a = tr.render_report(tr.multi_run(records, test_records, config))
        b = tr.render_report(tr.multi_run(records, test_records, config))
        assert a == b

    def test_lambda_zero_trains_without_mi(self, rng):
        records = make_records(rng, 6)
        config = tiny_config(lambda_mi=0.0)
        report = tr.multi_run(records, [], config)
        assert report["per_run"][0]["epochs"] >= 1

    def test_last_short_batch_is_kept(self, rng):
        # 9 train records with batch size 4 -> batches of 4, 4, 1
        records = make_records(rng, 6)
        config = tiny_config(batch_size=4, max_epochs=1, lambda_mi=0.25)
        train, val = tr.stratified_split(records, 0.75, seed=0)
        assert len(train) == 8
        result = tr.train_single_run(train + [val[0]], val, [], config, seed=0)
        assert result.epochs == 1

    def test_failed_run_marks_partial(self, rng, monkeypatch):
        records = make_records(rng, 6)
        config = tiny_config(runs=2)
        calls = {"n": 0}
        real = tr.train_single_run

        def flaky(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 1:
                raise NumericError("injected failure")
            return real(*args, **kwargs)

        monkeypatch.setattr(tr, "train_single_run", flaky)
        report = tr.multi_run(records, [], config)
        assert report["partial"] is True
        assert "error" in report["per_run"][0]
        assert "metrics" in report["per_run"][1]
