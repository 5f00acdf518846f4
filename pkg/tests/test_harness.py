import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tractlstm.errors import BadConfig, BadProtocolConfig, EmptyInput, EmptySplit, NoWhiteFibers
from tractlstm.harness.data import Dataset, TrainConfig, split_sizes, split_train_val
from tractlstm.harness.metrics import accuracy, confusion_matrix, macro_labels, recall_white
from tractlstm.harness.protocols import (EvalReport, ProtocolRunner, evaluate_models, hierarchical_predict,
                                         run_protocol)
from tractlstm.harness.report import (format_report, history_csv, reports_from_json, reports_to_json,
                                      summary_csv, summary_table)
from tractlstm.harness.training import decide, evaluate_loss, targets, train
from tractlstm.nn.model import ModelConfig, forward, init_params
from tractlstm.pruning import to_fixed_length
from tractlstm.synth import SynthConfig, generate_brain

TINY = dict(bilstm_hidden=4, lstm_hidden=(3,), epochs=1, batch_size=16, max_len=30)


def toy_dataset(n, seed=0, brain_index=0, white_share=0.3, T=10):
    r = np.random.default_rng([seed, brain_index])
    labels = np.where(r.random(n) < white_share, r.integers(1, 9, n), 0)
    lengths = r.integers(2, T + 1, n)
    seqs = []
    for lab, m in zip(labels, lengths):
        pts = r.normal(size=(m, 3)) + 5.0 + 3.0 * lab
        seqs.append(to_fixed_length(pts, T))
    return Dataset.from_sequences(seqs, labels, f"B{brain_index + 1}", brain_index)


def synth_datasets(n_brains=3, counts=(40,) + (6,) * 8, keep=0.75, max_len=30):
    out = []
    for b in range(n_brains):
        t, labels = generate_brain(SynthConfig(counts=counts, seed=100 + b, brain_id=f"B{b + 1}"))
        out.append(Dataset.from_tractogram(t, labels, f"B{b + 1}", b, keep, max_len))
    return out


def constant_model(head, bias):
    cfg = ModelConfig(bilstm_hidden=2, lstm_hidden=(2,), head_kind=head)
    p = init_params(cfg, 0)
    p.head_W[...] = 0.0
    p.head_b[...] = bias
    return p


class TestSplits:
    def test_default_sizes(self):
        assert split_sizes(1000, 0.4, 0.2) == (320, 80, 600)

    def test_tiny_pool_keeps_minimum(self):
        assert split_sizes(10, 0.999, 0.2) == (8, 1, 1)
        assert split_sizes(2, 0.999, 0.2) == (0, 1, 1)

    def test_empty_split_raised(self):
        with pytest.raises(EmptySplit):
            split_train_val(toy_dataset(2), TrainConfig(train_fraction=0.999))
        with pytest.raises(EmptySplit):
            split_train_val(toy_dataset(0), TrainConfig())

    def test_deterministic_and_disjoint(self):
        d = toy_dataset(1000)
        a = split_train_val(d, TrainConfig(seed=3))
        b = split_train_val(d, TrainConfig(seed=3))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.ids, y.ids)
        ids = [set(map(tuple, part.ids)) for part in a]
        assert len(ids[0]) == 320 and len(ids[1]) == 80 and len(ids[2]) == 600
        assert not (ids[0] & ids[1]) and not (ids[0] & ids[2]) and not (ids[1] & ids[2])
        c = split_train_val(d, TrainConfig(seed=4))
        assert not np.array_equal(a[0].ids, c[0].ids)

    @given(st.integers(1, 5000), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_sizes_partition(self, n, tf, vf):
        tr, va, te = split_sizes(n, tf, vf)
        assert tr + va + te == n
        assert va >= 1 and te >= 0


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.epochs, cfg.batch_size, cfg.train_fraction, cfg.val_fraction) == (15, 64, 0.4, 0.2)
        assert cfg.lr == 1e-3 and cfg.clip_norm == 5.0

    def test_problems_collected(self):
        with pytest.raises(BadConfig) as exc:
            TrainConfig(epochs=0, batch_size=0, train_fraction=1.0).validate()
        assert len(exc.value.problems) == 3


class TestMetrics:
    def test_accuracy(self):
        true = np.arange(100) % 9
        pred = true.copy()
        pred[:10] = (pred[:10] + 1) % 9
        assert accuracy(pred, true) == 0.9
        assert accuracy(true, true) == 1.0
        assert accuracy((true + 1) % 9, true) == 0.0

    def test_accuracy_empty(self):
        with pytest.raises(EmptyInput):
            accuracy([], [])

    def test_recall(self):
        true = np.array([1] * 10 + [0] * 5)
        pred = np.array([1] * 8 + [0] * 2 + [1] * 5)
        assert recall_white(pred, true) == 0.8
        assert recall_white(np.zeros(15, int), true) == 0.0

    def test_recall_without_white(self):
        with pytest.raises(NoWhiteFibers):
            recall_white([0, 1], [0, 0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            accuracy([0, 1], [0])

    def test_constant_grey_on_all_grey(self):
        assert accuracy(np.zeros(50, int), np.zeros(50, int)) == 1.0

    @given(st.integers(0, 2**31 - 1), st.integers(1, 300))
    def test_confusion_identities(self, seed, n):
        r = np.random.default_rng(seed)
        true, pred = r.integers(0, 9, n), r.integers(0, 9, n)
        cm = confusion_matrix(pred, true, 9)
        assert cm.sum() == n
        np.testing.assert_array_equal(cm.sum(axis=1), np.bincount(true, minlength=9))
        assert accuracy(pred, true) == pytest.approx(np.trace(cm) / n, abs=1e-15)
        mt, mp = macro_labels(true), macro_labels(pred)
        if mt.any():
            c2 = confusion_matrix(mp, mt, 2)
            assert recall_white(mp, mt) == pytest.approx(c2[1, 1] / (c2[1, 1] + c2[1, 0]), abs=1e-15)
        perm = r.permutation(n)
        assert accuracy(pred[perm], true[perm]) == accuracy(pred, true)


class TestHierarchical:
    coords = np.ones((4, 3)) + 1
    valid = np.array([1, 1, 1, 0], bool)

    def test_grey_wins_below_threshold(self):
        macro = constant_model("sigmoid", math.log(0.2 / 0.8))
        micro = constant_model("softmax", np.eye(8)[5] * 10)
        assert hierarchical_predict(macro, micro, self.coords, self.valid) == 0

    def test_micro_class_shifted(self):
        macro = constant_model("sigmoid", math.log(0.9 / 0.1))
        micro = constant_model("softmax", np.eye(8)[2] * 10)
        assert hierarchical_predict(macro, micro, self.coords, self.valid) == 3

    def test_uniform_micro_breaks_tie_low(self):
        macro = constant_model("sigmoid", 2.0)
        micro = constant_model("softmax", np.zeros(8))
        assert hierarchical_predict(macro, micro, self.coords, self.valid) == 1

    def test_threshold_is_inclusive(self):
        macro = constant_model("sigmoid", 0.0)  # p = 0.5 exactly
        micro = constant_model("softmax", np.zeros(8))
        assert hierarchical_predict(macro, micro, self.coords, self.valid) == 1

    @given(st.integers(0, 2**31 - 1))
    def test_never_micro_when_grey(self, seed):
        r = np.random.default_rng(seed)
        macro = init_params(ModelConfig(bilstm_hidden=3, lstm_hidden=(2,)), seed % 1000)
        micro = init_params(ModelConfig(bilstm_hidden=3, lstm_hidden=(2,), head_kind="softmax"), 1)
        coords = r.normal(size=(20, 6, 3))
        valid = np.ones((20, 6), bool)
        grey = forward(macro, coords, valid) < 0.5
        out = hierarchical_predict(macro, micro, coords, valid)
        assert np.all(out[grey] == 0) and np.all(out[~grey] >= 1)


class TestTraining:
    def test_targets(self):
        np.testing.assert_array_equal(targets([0, 3, 8], "macro"), [0, 1, 1])
        np.testing.assert_array_equal(targets([1, 3, 8], "micro"), [0, 2, 7])
        with pytest.raises(ValueError):
            targets([0, 1], "micro")

    def test_decide(self):
        np.testing.assert_array_equal(decide(np.array([0.49, 0.5, 0.9]), "sigmoid"), [0, 1, 1])
        np.testing.assert_array_equal(decide(np.array([[0.5, 0.5], [0.2, 0.8]]), "softmax"), [0, 1])

    def test_one_epoch_reduces_loss(self):
        d = synth_datasets(1)[0]
        cfg = TrainConfig(**{**TINY, "batch_size": len(d)})
        initial = init_params(cfg.model_config("macro"), cfg.seed)
        # train() fits the input normalization before initializing; mirror it
        shift, std = d.point_stats()
        initial.input_shift, initial.input_scale = shift, 1.0 / std
        before, _ = evaluate_loss(initial, d, "macro")
        params, history = train(cfg, d, d, "macro")
        after, _ = evaluate_loss(params, d, "macro")
        assert len(history) == 1
        assert after < before

    def test_history_and_determinism(self):
        d = synth_datasets(1)[0]
        tr, va, _ = split_train_val(d, TrainConfig())
        cfg = TrainConfig(**{**TINY, "epochs": 3})
        p1, h1 = train(cfg, tr, va, "macro")
        p2, h2 = train(cfg, tr, va, "macro")
        assert len(h1) == 3 and h1 == h2
        assert set(h1[0]) == {"epoch", "train_loss", "train_acc", "val_loss", "val_acc"}
        for a, b in zip(p1.arrays(), p2.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_micro_level(self):
        d = synth_datasets(1)[0].white()
        params, history = train(TrainConfig(**TINY), d, d, "micro")
        assert params.head_kind == "softmax" and params.head_W.shape[0] == 8


@pytest.fixture(scope="module")
def cohort():
    return synth_datasets(3)


class TestProtocols:
    def test_intra_one_brain(self, cohort):
        reports = run_protocol("intra", cohort[:1], TrainConfig(**TINY))
        levels = [r.level for r in reports]
        assert levels.count("macro") == 1 and levels.count("micro") == 1
        assert all(r.brain == "B1" and r.train_brain == "B1" for r in reports)
        macro = next(r for r in reports if r.level == "macro")
        assert macro.n_test == split_sizes(len(cohort[0]), 0.4, 0.2)[2]
        assert macro.confusion.shape == (2, 2)

    def test_intra_disjoint(self, cohort):
        runner = ProtocolRunner(cohort, TrainConfig(**TINY))
        runner.intra()
        for k in range(3):
            tr, va, te = (set(map(tuple, p.ids)) for p in runner.splits[k])
            assert not (te & tr) and not (te & va) and not (tr & va)
            assert len(tr | va | te) == len(cohort[k])

    def test_inter_reports_other_brains(self, cohort):
        runner = ProtocolRunner(cohort, TrainConfig(**TINY))
        reports = runner.inter()
        assert {r.brain for r in reports} == {"B1", "B3"}
        assert {r.train_brain for r in reports} == {"B2"}
        macro = [r for r in reports if r.level == "macro"]
        assert [r.n_test for r in macro] == [len(cohort[0]), len(cohort[2])]
        # intra on B2 reuses the model trained for inter
        n_models = len(runner._models)
        runner.intra()
        assert len(runner._models) == n_models + 4

    def test_inter_needs_two_brains(self, cohort):
        with pytest.raises(BadProtocolConfig):
            ProtocolRunner(cohort[:1], TrainConfig(**TINY)).inter()

    def test_inter_fraction(self, cohort):
        cfg = TrainConfig(**TINY, inter_test_fraction=0.5)
        reports = ProtocolRunner(cohort, cfg).inter()
        assert reports[0].n_test == len(cohort[0]) // 2

    def test_merged_split_sizes(self):
        data = [toy_dataset(1000, brain_index=b) for b in range(3)]
        tr, va, te = ProtocolRunner(data, TrainConfig(**TINY)).merged_split()
        assert len(tr) + len(va) == 1500 and len(te) == 1500
        assert len(va) == 300
        for b in range(3):
            assert np.sum(te.ids[:, 0] == b) == 500
        pool = set(map(tuple, np.concatenate([tr.ids, va.ids])))
        assert not pool & set(map(tuple, te.ids))

    def test_merged_report(self, cohort):
        reports = run_protocol("merged", cohort, TrainConfig(**TINY))
        assert {r.brain for r in reports} == {"merged"}

    def test_unknown_protocol(self, cohort):
        with pytest.raises(BadProtocolConfig):
            run_protocol("cross", cohort, TrainConfig(**TINY))


class TestReports:
    def reports(self):
        macro = constant_model("sigmoid", -3.0)
        micro = constant_model("softmax", np.zeros(8))
        d = toy_dataset(50)
        return evaluate_models(macro, micro, d, "intra", "B1", "B1")

    def test_all_grey_predictor(self):
        macro_r, micro_r, hier = self.reports()
        assert macro_r.recall_white == 0.0
        assert macro_r.accuracy == np.mean(toy_dataset(50).labels == 0)
        assert micro_r.n_test == int(np.sum(toy_dataset(50).labels != 0))
        assert hier.confusion.shape == (9, 9)

    def test_json_round_trip(self):
        reports = self.reports()
        back = reports_from_json(reports_to_json(reports))
        assert reports_to_json(back) == reports_to_json(reports)

    def test_text_outputs(self):
        reports = self.reports()
        assert "recall_white" in format_report(reports)
        table = summary_table(reports)
        assert "Intra" in table and "B1" in table
        assert summary_csv(reports).splitlines()[0].startswith("protocol,brain")
        assert history_csv([dict(epoch=1, train_loss=0.5, train_acc=0.9, val_loss=0.4, val_acc=1.0)]) \
            .splitlines()[1] == "1,0.5,0.9,0.4,1"

    def test_report_validation(self):
        with pytest.raises(ValueError):
            EvalReport("intra", "macro", "B1", 1.2, None, np.eye(2), 2)
        with pytest.raises(ValueError):
            EvalReport("intra", "macro", "B1", 0.5, None, np.eye(2), 3)
