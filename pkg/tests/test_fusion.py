import pytest

from hyqa.evalkit import GoldSet, match_at_k
from hyqa.fusion import FusionConfig, fuse, minmax_normalize, tune_weight
from hyqa.scored import ScoredPassage


def sp(pid, score, provenance="sparse"):
    return ScoredPassage(pid, score, provenance)


class TestMinMax:
    def test_hand_values(self):
        assert minmax_normalize([2.0, 4.0, 8.0]) == [0.0, 1.0 / 3.0, 1.0]

    def test_constant_list_maps_to_half(self):
        assert minmax_normalize([3.0, 3.0, 3.0]) == [0.5, 0.5, 0.5]

    def test_singleton(self):
        assert minmax_normalize([7.0]) == [0.5]

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            minmax_normalize([])


class TestConfig:
    def test_defaults(self):
        config = FusionConfig()
        assert config.pool_size == 2000
        assert config.weight == 0.5

    def test_weight_bounds(self):
        with pytest.raises(ValueError):
            FusionConfig(weight=-0.1)
        with pytest.raises(ValueError):
            FusionConfig(weight=1.1)


class TestFuse:
    def sparse_run(self):
        return [sp("a", 10.0), sp("b", 6.0), sp("c", 2.0)]

    def dense_run(self):
        return [sp("b", 0.9, "dense"), sp("d", 0.5, "dense"), sp("a", 0.1, "dense")]

    def test_hand_worked_combination(self):
        fused = {r.passage_id: r.score for r in fuse(self.sparse_run(), self.dense_run(), FusionConfig(weight=0.5))}
        # Sparse norms: a=1, b=0.5, c=0; dense norms: b=1, d=0.5, a=0.
        assert fused["a"] == pytest.approx(0.5)
        assert fused["b"] == pytest.approx(0.75)
        assert fused["c"] == pytest.approx(0.0)
        assert fused["d"] == pytest.approx(0.25)

    def test_missing_passage_floors_to_zero(self):
        fused = {r.passage_id: r.score for r in fuse(self.sparse_run(), self.dense_run(), FusionConfig(weight=1.0))}
        assert fused["d"] == 0.0

    def test_weight_one_is_sparse_ranking(self):
        fused = fuse(self.sparse_run(), self.dense_run(), FusionConfig(weight=1.0))
        sparse_order = [r.passage_id for r in self.sparse_run()]
        fused_known = [r.passage_id for r in fused if r.passage_id in sparse_order]
        assert fused_known == sparse_order

    def test_weight_zero_is_dense_ranking(self):
        fused = fuse(self.sparse_run(), self.dense_run(), FusionConfig(weight=0.0))
        dense_order = [r.passage_id for r in self.dense_run()]
        fused_known = [r.passage_id for r in fused if r.passage_id in dense_order]
        assert fused_known == dense_order

    def test_provenance_and_tie_order(self):
        fused = fuse([sp("b", 1.0), sp("a", 1.0)], [], FusionConfig(weight=1.0))
        assert [r.passage_id for r in fused] == ["a", "b"]
        assert all(r.provenance == "fused" for r in fused)

    def test_pool_size_truncates_inputs(self):
        fused = fuse(self.sparse_run(), self.dense_run(), FusionConfig(pool_size=1, weight=0.5))
        assert {r.passage_id for r in fused} == {"a", "b"}

    def test_both_empty(self):
        assert fuse([], []) == []


class TestTuneWeight:
    def runs(self):
        # q1 needs sparse evidence to push s1 past the dense distractor x2;
        # q2 needs dense evidence to keep d1 ahead of the sparse distractor y.
        # Only intermediate weights solve both at rank 1.
        texts = {
            "s1": "the answer alpha lives here",
            "d1": "the answer beta lives here",
            "x1": "nothing useful",
            "x2": "also nothing",
            "x3": "more nothing",
            "y": "distractor text",
            "y2": "last distractor",
        }
        golds = [
            GoldSet("q1", "where is alpha", ("alpha",)),
            GoldSet("q2", "where is beta", ("beta",)),
        ]
        sparse_runs = {
            "q1": [sp("s1", 5.0), sp("x1", 1.0)],
            "q2": [sp("y", 5.0), sp("d1", 4.5), sp("y2", 0.5)],
        }
        dense_runs = {
            "q1": [sp("x2", 0.9, "dense"), sp("s1", 0.8, "dense"), sp("x3", 0.1, "dense")],
            "q2": [sp("d1", 0.9, "dense"), sp("y2", 0.1, "dense")],
        }
        return golds, sparse_runs, dense_runs, texts

    def test_tuned_no_worse_than_endpoints(self):
        golds, sparse_runs, dense_runs, texts = self.runs()
        best_w, best_metric = tune_weight(golds, sparse_runs, dense_runs, texts, k=1)
        endpoint = []
        for w in (0.0, 1.0):
            hits = 0
            for gold in golds:
                fused = fuse(sparse_runs[gold.query_id], dense_runs[gold.query_id], FusionConfig(weight=w))
                hits += match_at_k(fused, gold, 1, texts)
            endpoint.append(hits / len(golds))
        assert best_metric >= max(endpoint)

    def test_interior_weight_wins_here(self):
        golds, sparse_runs, dense_runs, texts = self.runs()
        best_w, best_metric = tune_weight(golds, sparse_runs, dense_runs, texts, k=1)
        assert 0.0 < best_w < 1.0
        assert best_metric == 1.0

    def test_ties_prefer_smaller_weight(self):
        texts = {"a": "answer here"}
        golds = [GoldSet("q1", "q", ("answer",))]
        runs = {"q1": [sp("a", 1.0)]}
        best_w, best_metric = tune_weight(golds, runs, runs, texts, k=1)
        assert best_w == 0.0
        assert best_metric == 1.0

    def test_grid_includes_endpoints(self):
        texts = {"s": "solo answer", "d": "irrelevant"}
        golds = [GoldSet("q1", "q", ("solo",))]
        sparse_runs = {"q1": [sp("s", 1.0), sp("d", 0.5)]}
        dense_runs = {"q1": [sp("d", 1.0, "dense"), sp("s", 0.5, "dense")]}
        best_w, best_metric = tune_weight(golds, sparse_runs, dense_runs, texts, k=1)
        assert best_metric == 1.0

    def test_empty_dev_set_errors(self):
        with pytest.raises(ValueError):
            tune_weight([], {}, {}, {})
