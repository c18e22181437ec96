import csv
import zlib

import numpy as np
import pytest

from effops.evalbench import (SyntheticTask, TradeoffCurve, TradeoffPoint, commutativity_report,
                              curve_distance, gen_task, iter_batches, label_of, measure_curve,
                              measure_point, predict, read_curve_csv, valid_orderings,
                              write_curve_csv, write_report_csv)
from effops.evalbench.tasks import CLS_ID, MARK_ID, PAD_ID
from oracles import interp_distance


def curve(*pts):
    return TradeoffCurve(tuple(TradeoffPoint(float(t), float(a)) for t, a in pts))


class TestTasks:
    def test_three_marks_is_odd(self):
        task = SyntheticTask()
        seq = np.array([CLS_ID, MARK_ID, 7, MARK_ID, 9, MARK_ID, PAD_ID])
        assert label_of(task, seq) == 1

    def test_deterministic(self):
        a, b = gen_task(SyntheticTask(seed=3)), gen_task(SyntheticTask(seed=3))
        for s in ("train", "dev", "test"):
            np.testing.assert_array_equal(getattr(a, s).tokens, getattr(b, s).tokens)
            np.testing.assert_array_equal(getattr(a, s).labels, getattr(b, s).labels)

    @pytest.mark.parametrize("kind,classes", [("parity", 2), ("pattern", 2), ("majority", 3)])
    def test_labels_follow_rule_and_balance(self, kind, classes):
        task = SyntheticTask(kind=kind, n_classes=classes, n_train=10000, n_dev=10, n_test=10,
                             min_len=7)
        ds = gen_task(task).train
        assert all(label_of(task, t) == y for t, y in zip(ds.tokens, ds.labels))
        counts = np.bincount(ds.labels, minlength=classes) / len(ds)
        assert np.abs(counts - 1 / classes).max() <= 0.05

    def test_lengths_vary_and_match_padding(self):
        ds = gen_task(SyntheticTask()).test
        assert len(np.unique(ds.lengths)) > 1
        for t, n in zip(ds.tokens, ds.lengths):
            assert t[0] == CLS_ID and (t[1:n] != PAD_ID).all() and (t[n:] == PAD_ID).all()

    def test_splits_disjoint(self):
        sp = gen_task(SyntheticTask())
        rows = [tuple(r) for s in (sp.train, sp.dev, sp.test) for r in s.tokens]
        assert len(rows) == len(set(rows))

    @pytest.mark.parametrize("kw", [{"kind": "nope"}, {"min_len": 10, "max_len": 5},
                                    {"n_test": 0}, {"kind": "parity", "n_classes": 3},
                                    {"max_marked": 9, "min_len": 4}])
    def test_degenerate(self, kw):
        with pytest.raises(ValueError):
            SyntheticTask(**kw)


class TestBatching:
    def test_dynamic_width_is_batch_max(self):
        ds = gen_task(SyntheticTask()).test
        for tok, mask, y, idx in iter_batches(ds, 8, dynamic_length=True):
            assert tok.shape[1] == ds.lengths[idx].max()
            assert (mask.sum(1) == ds.lengths[idx]).all()

    def test_static_width_is_full(self):
        ds = gen_task(SyntheticTask()).test
        assert {t.shape[1] for t, *_ in iter_batches(ds, 8, dynamic_length=False)} == {16}

    def test_order(self):
        ds = gen_task(SyntheticTask()).test
        order = np.arange(len(ds))[::-1]
        idx = np.concatenate([b[3] for b in iter_batches(ds, 7, order=order)])
        np.testing.assert_array_equal(idx, order)


class TestDynamicLength:
    def test_exact_and_cheaper(self, small_lab):
        art = small_lab.base(1)
        test = small_lab.data.test
        on = predict(art, test, dynamic_length=True)
        off = predict(art, test, dynamic_length=False)
        assert np.abs(on["logits"] - off["logits"]).max() <= 1e-6
        assert on["macs"].mean() < off["macs"].mean()

    def test_no_saving_when_every_batch_is_full(self, small_lab):
        art = small_lab.base(1)
        test = small_lab.data.test
        full = np.flatnonzero(test.lengths == test.max_len)
        ds = test.subset(full)
        on = predict(art, ds, dynamic_length=True)
        off = predict(art, ds, dynamic_length=False)
        assert on["macs"].mean() == off["macs"].mean()

    def test_l_flag_selects_policy(self, small_lab):
        art = small_lab.artifact("L", 1)
        assert art.l_flag
        r = predict(art, small_lab.data.test)
        assert r["macs"].mean() == predict(art, small_lab.data.test, dynamic_length=True)["macs"].mean()


class TestMeasure:
    def test_point_fields(self, small_lab):
        p = measure_point(small_lab.base(1), small_lab.data.test)
        assert 0 <= p.accuracy <= 1 and p.threshold is None and p.avg_exit_layer == 4

    def test_curve_needs_exits(self, small_lab):
        with pytest.raises(ValueError):
            measure_curve(small_lab.base(1), small_lab.data.test)

    def test_exit_point_needs_threshold(self, small_lab):
        with pytest.raises(ValueError):
            measure_point(small_lab.artifact("E", 1), small_lab.data.test)

    def test_curve_extremes(self, small_lab):
        c = measure_curve(small_lab.artifact("E", 1), small_lab.data.test, thresholds=(0.0, 1.01))
        by_thr = {p.threshold: p for p in c.points}
        assert by_thr[0.0].avg_exit_layer == 1 and by_thr[1.01].avg_exit_layer == 4

    def test_empty_test_set(self, small_lab):
        with pytest.raises(ValueError):
            measure_point(small_lab.base(1), small_lab.data.test.subset([]))


class TestCurveDistance:
    def test_identity(self):
        c = curve((1, 0.8), (2, 0.9), (3, 0.95))
        assert curve_distance(c, c) == 0.0

    def test_hand_evaluated_pair(self):
        assert curve_distance(curve((1, .80), (2, .90)), curve((1, .70), (2, .95))) == pytest.approx(10.0)

    def test_vertical_shift(self):
        a = curve((1, 0.5), (2, 0.7), (4, 0.9))
        b = curve((1, 0.52), (2, 0.72), (4, 0.92))
        assert curve_distance(a, b) == pytest.approx(2.0)

    def test_symmetric(self):
        a, b = curve((1, 0.5), (3, 0.9)), curve((2, 0.6), (5, 0.7))
        assert curve_distance(a, b) == curve_distance(b, a)

    def test_disjoint(self):
        with pytest.raises(ValueError):
            curve_distance(curve((1, 0.5), (2, 0.6)), curve((3, 0.5), (4, 0.6)))

    @pytest.mark.parametrize("seed", range(10))
    def test_against_dense_oracle(self, seed):
        r = np.random.default_rng(seed)
        pa = list(zip(np.sort(r.uniform(0, 10, 6)), r.uniform(0.5, 1, 6)))
        pb = list(zip(np.sort(r.uniform(0, 10, 5)), r.uniform(0.5, 1, 5)))
        got = curve_distance(curve(*pa), curve(*pb))
        # the library uses a 100-point grid, so it can only under-estimate
        assert got <= interp_distance(pa, pb) + 1e-9
        assert got >= interp_distance(pa, pb) - 3.0

    def test_equal_times_collapse(self):
        a = curve((1, 0.6), (1, 0.8), (2, 0.9))
        b = curve((1, 0.7), (2, 0.9))
        assert curve_distance(a, b) == pytest.approx(0.0, abs=1e-12)


class TestCsv:
    def test_roundtrip(self, tmp_path):
        c = TradeoffCurve((TradeoffPoint(100.0, 0.5, 0.5, 1.5, 0.01), TradeoffPoint(200.0, 0.75, 0.9, 3.0)))
        back = read_curve_csv(write_curve_csv(c, tmp_path / "c.csv"))
        assert back.points == c.points

    def test_columns(self, tmp_path):
        p = write_curve_csv(curve((1, 0.5)), tmp_path / "c.csv")
        with p.open() as f:
            assert next(csv.reader(f)) == ["threshold", "avg_exit_layer", "mean_macs", "wallclock_ms",
                                           "accuracy"]


class TestCommute:
    @staticmethod
    def fake_curves(order, seed):
        r = np.random.default_rng(zlib.crc32(f"{order}/{seed}".encode()))
        return curve((1, 0.7 + r.uniform(0, 0.02)), (2, 0.8 + r.uniform(0, 0.02)))

    def test_pair_counts(self):
        rep = commutativity_report("DE", [1, 2, 3], self.fake_curves)
        assert rep.orderings == ("DE", "ED")
        assert (rep.same.n_pairs, rep.diff.n_pairs) == (6, 9)

    def test_orderings_skip_invalid(self):
        assert valid_orderings("DP") == ["DP"]
        assert valid_orderings("DPE") == ["DEP", "DPE", "EDP"]

    def test_requires_e(self):
        with pytest.raises(ValueError):
            commutativity_report("DP", [1, 2], self.fake_curves)

    def test_requires_two_seeds(self):
        with pytest.raises(ValueError):
            commutativity_report("DE", [1], self.fake_curves)

    def test_sample_sd_and_overlap(self):
        rep = commutativity_report("PE", [1, 2, 3], self.fake_curves)
        assert rep.overlap_1sd == (abs(rep.same.mean - rep.diff.mean) <= rep.same.sd + rep.diff.sd)

    def test_report_csv(self, tmp_path):
        rep = commutativity_report("DE", [1, 2, 3], self.fake_curves, dataset="toy")
        p = write_report_csv([rep], tmp_path / "r.csv")
        rows = list(csv.DictReader(p.open()))
        assert [r["group"] for r in rows] == ["same-order", "different-order"]
        assert [int(r["n_pairs"]) for r in rows] == [6, 9]
