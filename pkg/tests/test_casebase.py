import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casediff.casebase import (
    Case,
    CaseBase,
    LabelRange,
    SplitPlan,
    SynthConfig,
    generate_synthetic,
    kfold_split,
    load_cases,
    novel_split,
    save_cases,
    synthetic_feature_map,
)
from casediff.exceptions import CaseFileError
from casediff.nn import mae
from casediff.retrieval import l1_nearest


def make_cb(solutions, dim=2, seed=0):
    rng = np.random.default_rng(seed)
    return CaseBase([f"c{i}" for i in range(len(solutions))], rng.normal(size=(len(solutions), dim)), solutions)


class TestCaseBase:
    def test_is_immutable(self):
        cb = make_cb([1.0, 2.0])
        with pytest.raises(ValueError):
            cb.features[0, 0] = 5.0
        with pytest.raises(ValueError):
            cb.solutions[0] = 5.0

    def test_rejects_duplicate_ids_and_ragged_input(self):
        with pytest.raises(ValueError):
            CaseBase(["a", "a"], np.zeros((2, 2)), [1, 2])
        with pytest.raises(ValueError):
            CaseBase(["a", "b"], np.zeros((3, 2)), [1, 2])
        with pytest.raises(ValueError):
            CaseBase(["a"], np.zeros((1, 2)), [np.nan])

    def test_from_cases_preserves_order(self):
        cases = [Case("x", np.array([1.0, 2.0]), 3.0), Case("y", np.array([0.0, 1.0]), 4.0)]
        cb = CaseBase.from_cases(cases)
        assert cb.ids == ("x", "y")
        assert cb[1].solution == 4.0
        assert cb.index_of("y") == 1


class TestFeatureFile:
    def test_minimal_file(self, tmp_path):
        path = tmp_path / "cases.csv"
        path.write_text("id,label,f0,f1\na,30,0.0,1.0\n")
        cb = load_cases(path)
        assert len(cb) == 1 and cb.feature_dim == 2
        assert cb[0].solution == 30.0
        np.testing.assert_array_equal(cb[0].features, [0.0, 1.0])

    @pytest.mark.parametrize(
        "body, line",
        [
            ("id,label,f0,f1\na,30,0.0,1.0\nb,31,2.0\n", 3),
            ("id,label,f0\na,30,0.0\nb,x,1.0\n", 3),
            ("id,label,f0\na,30,0.0\nc,1,1\na,31,1.0\n", 4),
            ("id,label,f0\na,30,inf\n", 2),
            ("id,lab,f0\na,30,1\n", 1),
        ],
    )
    def test_malformed_rows_name_the_line(self, tmp_path, body, line):
        path = tmp_path / "bad.csv"
        path.write_text(body)
        with pytest.raises(CaseFileError) as err:
            load_cases(path)
        assert err.value.line == line
        assert f"line {line}" in str(err.value)

    @pytest.mark.parametrize("body", ["", "id,label,f0\n"])
    def test_empty_file_rejected(self, tmp_path, body):
        path = tmp_path / "empty.csv"
        path.write_text(body)
        with pytest.raises(CaseFileError):
            load_cases(path)

    def test_round_trip_is_bit_identical(self, tmp_path):
        cb = generate_synthetic(SynthConfig(case_count=1000, feature_dim=16, seed=3))
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        save_cases(cb, first)
        loaded = load_cases(first)
        assert loaded == cb
        save_cases(loaded, second)
        assert first.read_bytes() == second.read_bytes()

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=3, max_size=30))
    def test_round_trip_arbitrary_reals(self, tmp_path_factory, values):
        n = len(values) // 3
        X = np.array(values[: 3 * n]).reshape(n, 3)
        cb = CaseBase([f"r{i}" for i in range(n)], X[:, 1:], X[:, 0])
        path = tmp_path_factory.mktemp("rt") / "cases.csv"
        save_cases(cb, path)
        assert load_cases(path) == cb


class TestKFold:
    @pytest.mark.parametrize("n", [100, 1000, 1003])
    def test_partition_and_proportions(self, n):
        cb = make_cb(np.arange(n, dtype=float))
        plan = SplitPlan.normal(10)
        tests = []
        for fold in range(10):
            tr, va, te = kfold_split(cb, plan, fold, seed=7)
            ids = set(tr.ids) | set(va.ids) | set(te.ids)
            assert ids == set(cb.ids)
            assert len(tr) + len(va) + len(te) == n
            if n % 10 == 0:
                assert (len(tr), len(va), len(te)) == (8 * n // 10, n // 10, n // 10)
            else:
                # the first n % 10 blocks hold one extra case
                sizes = {len(va), len(te)}
                assert sizes <= {n // 10, n // 10 + 1}
                assert len(te) == n // 10 + (fold < n % 10)
                assert len(va) == n // 10 + ((fold + 1) % 10 < n % 10)
            tests.append(set(te.ids))
        assert set().union(*tests) == set(cb.ids)
        assert sum(len(t) for t in tests) == n

    def test_validation_block_follows_test_block(self):
        cb = make_cb(np.arange(50, dtype=float))
        plan = SplitPlan.normal(5)
        for fold in range(5):
            _, va, _ = kfold_split(cb, plan, fold, seed=1)
            _, _, next_te = kfold_split(cb, plan, (fold + 1) % 5, seed=1)
            assert va == next_te

    def test_deterministic(self):
        cb = make_cb(np.arange(60, dtype=float))
        a = kfold_split(cb, SplitPlan.normal(), 3, seed=11)
        b = kfold_split(cb, SplitPlan.normal(), 3, seed=11)
        assert all(x == y for x, y in zip(a, b))
        c = kfold_split(cb, SplitPlan.normal(), 3, seed=12)
        assert c[2] != a[2]

    def test_fold_out_of_range(self):
        cb = make_cb(np.arange(20, dtype=float))
        with pytest.raises(ValueError):
            kfold_split(cb, SplitPlan.normal(10), 10, seed=0)
        with pytest.raises(ValueError):
            kfold_split(cb, SplitPlan.normal(10), -1, seed=0)

    def test_paper_fractions(self):
        assert SplitPlan.normal(10).fractions == pytest.approx((0.8, 0.1, 0.1), abs=1e-12)
        with pytest.raises(ValueError):
            SplitPlan("normal", 10, fractions=(0.7, 0.2, 0.1))


class TestNovelSplit:
    def test_routing(self):
        cb = make_cb([15.0, 25.0, 55.0, 75.0])
        split = novel_split(cb, SplitPlan.novel(2), 0, seed=0)
        assert set(split.train.solutions) | set(split.validation.solutions) == {25.0}
        assert [(name, list(b.solutions)) for name, b in split.buckets] == [
            ("<20", [15.0]),
            ("50-70", [55.0]),
            (">70", [75.0]),
        ]

    def test_boundaries(self):
        cb = make_cb([20.0, 50.0, 70.0, 70.1, 19.9, 50.1])
        split = novel_split(cb, SplitPlan.novel(2), 0, seed=0)
        train_side = set(split.train.solutions) | set(split.validation.solutions)
        assert train_side == {20.0, 50.0}
        buckets = dict(split.buckets)
        assert list(buckets["<20"].solutions) == [19.9]
        assert list(buckets["50-70"].solutions) == [70.0, 50.1]
        assert list(buckets[">70"].solutions) == [70.1]

    @pytest.mark.parametrize("n", [100, 1000, 1003])
    def test_partition_and_ninety_ten(self, n):
        cb = generate_synthetic(SynthConfig(case_count=n, feature_dim=4, seed=n))
        plan = SplitPlan.novel(10)
        in_range = int(plan.train_range.contains(cb.solutions).sum())
        val_seen = []
        for fold in range(10):
            split = novel_split(cb, plan, fold, seed=5)
            total = len(split.train) + len(split.validation) + sum(len(b) for _, b in split.buckets)
            assert total == n and split.unassigned == 0
            ids = set(split.train.ids) | set(split.validation.ids)
            for _, b in split.buckets:
                assert not ids & set(b.ids)
                ids |= set(b.ids)
            assert ids == set(cb.ids)
            assert len(split.validation) == in_range // 10 + (fold < in_range % 10)
            val_seen.append(set(split.validation.ids))
        assert sum(len(v) for v in val_seen) == in_range
        assert len(set().union(*val_seen)) == in_range

    def test_bucket_counts_match_one_pass_count(self):
        cb = generate_synthetic(SynthConfig(case_count=10_000, feature_dim=2, seed=8))
        counts = {"<20": 0, "50-70": 0, ">70": 0, "train": 0}
        for s in cb.solutions.tolist():
            if s < 20:
                counts["<20"] += 1
            elif 20 <= s <= 50:
                counts["train"] += 1
            elif s <= 70:
                counts["50-70"] += 1
            else:
                counts[">70"] += 1
        split = novel_split(cb, SplitPlan.novel(10), 0, seed=0)
        assert {name: len(b) for name, b in split.buckets} == {k: v for k, v in counts.items() if k != "train"}
        assert len(split.train) + len(split.validation) == counts["train"]

    def test_empty_bucket_reported(self):
        cb = make_cb([25.0, 30.0, 35.0, 60.0])
        split = novel_split(cb, SplitPlan.novel(2), 1, seed=0)
        assert split.empty_buckets == ["<20", ">70"]

    def test_empty_training_range_rejected(self):
        with pytest.raises(ValueError):
            novel_split(make_cb([5.0, 80.0]), SplitPlan.novel(2), 0, seed=0)

    def test_overlapping_bucket_rejected(self):
        with pytest.raises(ValueError):
            SplitPlan.novel(10, query_buckets=[LabelRange("45-60", 45.0, 60.0)])
        with pytest.raises(ValueError):
            SplitPlan.novel(10, query_buckets=[LabelRange("to20", upper=20.0)])

    def test_label_range_overlap_rules(self):
        closed = LabelRange("a", 0.0, 1.0)
        assert not closed.overlaps(LabelRange("b", 1.0, 2.0, include_lower=False))
        assert closed.overlaps(LabelRange("b", 1.0, 2.0))
        assert not closed.overlaps(LabelRange("b", 3.0, 4.0))


class TestSynthetic:
    def test_labels_bounded_and_rounded(self):
        cb = generate_synthetic(SynthConfig(case_count=5000, feature_dim=3, seed=1))
        assert cb.solutions.min() >= 1 and cb.solutions.max() <= 100
        np.testing.assert_array_equal(cb.solutions, np.round(cb.solutions, 1))

    def test_skewed_toward_young_adults(self):
        cb = generate_synthetic(SynthConfig(case_count=5000, feature_dim=2, seed=2))
        assert 30 < np.median(cb.solutions) < 40
        assert (cb.solutions > 70).mean() < 0.05

    def test_noise_free_features_are_a_function_of_age(self):
        cfg = SynthConfig(case_count=3000, feature_dim=8, noise_sigma=0.0, seed=4)
        fmap = synthetic_feature_map(cfg)
        twins = fmap(np.array([37.123, 37.123]))
        np.testing.assert_array_equal(twins[0], twins[1])
        cb = generate_synthetic(cfg)
        # solutions are the drawn ages rounded to 0.1, so features sit within w_max * 0.05
        gap = np.abs(cb.features - fmap(cb.solutions)).max(axis=1)
        assert np.all(gap <= fmap.frequencies.max() * 0.05 + 1e-12)
        assert np.any(gap > 0)

    @given(st.lists(st.floats(1.0, 100.0), min_size=2, max_size=30))
    def test_lipschitz_in_age(self, ages):
        fmap = synthetic_feature_map(SynthConfig(feature_dim=16, seed=6))
        t = np.array(ages)
        X = fmap(t)
        i, j = np.triu_indices(len(t), k=1)
        lhs = np.abs(X[i] - X[j]).max(axis=1)
        assert np.all(lhs <= fmap.frequencies.max() * np.abs(t[i] - t[j]) + 1e-12)

    def test_deterministic(self):
        assert generate_synthetic(SynthConfig(case_count=50, seed=3)) == generate_synthetic(SynthConfig(case_count=50, seed=3))

    def test_l1_retrieval_beats_constant(self):
        cb = generate_synthetic(SynthConfig(case_count=2000, feature_dim=32, noise_sigma=0.05, seed=42))
        train, val, test = kfold_split(cb, SplitPlan.normal(10), 0, seed=0)
        idx, _ = l1_nearest(test.features, train.features)
        retrieval = mae(train.solutions[idx], test.solutions)
        constant = mae(np.full(len(test), train.solutions.mean()), test.solutions)
        assert retrieval < constant

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(noise_sigma=-0.1)
        with pytest.raises(ValueError):
            SynthConfig(frequency_range=(0.0, 0.2))
