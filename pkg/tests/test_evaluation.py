import itertools
import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from streid.evaluation import average_precision, cmc, evaluate, mean_average_precision, relevance_vector
from streid.types import DataError

from conftest import obs
from oracles import pr_area


class TestRelevance:
    def test_direct_match(self):
        q = obs("q", "X", 1, 0)
        ranked = [obs("g1", "X", 2, 0), obs("g2", "Y", 2, 0), obs("g3", "X", 3, 0)]
        assert relevance_vector(q, ranked).tolist() == [1, 0, 1]

    def test_same_camera_same_identity_is_junk(self):
        q = obs("q", "X", 1, 0)
        ranked = [obs("g1", "X", 1, 0), obs("g2", "Y", 2, 0), obs("g3", "X", 3, 0)]
        assert relevance_vector(q, ranked).tolist() == [0, 1]

    def test_same_camera_other_identity_kept(self):
        q = obs("q", "X", 1, 0)
        assert relevance_vector(q, [obs("g", "Y", 1, 0)]).tolist() == [0]

    def test_unlabeled_gallery_is_distractor(self):
        q = obs("q", "X", 1, 0)
        assert relevance_vector(q, [obs("g", None, 2, 0)]).tolist() == [0]

    def test_query_identity_required(self):
        with pytest.raises(DataError):
            relevance_vector(obs("q", None, 1, 0), [])


class TestAveragePrecision:
    @pytest.mark.parametrize(
        "rel, expected",
        [([1, 0, 1], 5 / 6), ([1, 1, 1], 1.0), ([0, 0, 1], 1 / 3), ([0, 1], 0.5)],
    )
    def test_hand_cases(self, rel, expected):
        assert average_precision(rel) == pytest.approx(expected, abs=1e-12)

    def test_no_positive(self):
        with pytest.raises(ValueError):
            average_precision([0, 0])

    @pytest.mark.parametrize("n", range(1, 9))
    def test_matches_pr_area_oracle(self, n):
        for bits in itertools.product((0, 1), repeat=n):
            if any(bits):
                assert average_precision(bits) == pytest.approx(float(pr_area(bits)), rel=1e-12, abs=0)


def test_mean_ap():
    assert mean_average_precision([1.0, 0.5]) == 0.75
    assert mean_average_precision([0.8333]) == 0.8333
    with pytest.raises(ValueError):
        mean_average_precision([])


class TestCmc:
    def test_threshold(self):
        assert cmc([[0, 1, 0]], [1, 5]) == {1: 0.0, 5: 1.0}

    def test_two_queries(self):
        assert cmc([[1, 0, 0], [0, 0, 1]], [1, 3])[1] == 0.5

    def test_first_rank_hit(self):
        assert cmc([[1, 0]], [1, 5, 10]) == {1: 1.0, 5: 1.0, 10: 1.0}

    def test_queries_without_positive_excluded(self):
        assert cmc([[1, 0], [0, 0]], [1]) == {1: 1.0}

    def test_bad_k(self):
        with pytest.raises(ValueError):
            cmc([[1]], [0])


@given(st.lists(st.lists(st.integers(0, 1), min_size=1, max_size=12), min_size=1, max_size=10))
def test_cmc_monotone_and_bounded(rels):
    out = cmc(rels, range(1, 14))
    values = [out[k] for k in range(1, 14)]
    assert all(0 <= v <= 1 for v in values)
    assert values == sorted(values)


@given(st.integers(1, 10), st.integers(0, 10))
def test_perfect_ranking(pos, neg):
    rel = [1] * pos + [0] * neg
    assert average_precision(rel) == 1.0
    assert cmc([rel], [1])[1] == 1.0


class TestEvaluate:
    def setup_method(self):
        self.queries = {"q1": obs("q1", "X", 1, 0), "q2": obs("q2", "Z", 1, 0)}
        self.gallery = {
            "g1": obs("g1", "X", 2, 0),
            "g2": obs("g2", "Y", 2, 0),
            "g3": obs("g3", "X", 3, 0),
            "g4": obs("g4", "Z", 1, 0),
        }

    def test_report(self, caplog):
        rankings = {"q1": ["g1", "g2", "g3", "g4"], "q2": ["g4", "g1", "g2", "g3"]}
        with caplog.at_level(logging.WARNING):
            report = evaluate(rankings, self.queries, self.gallery, [1, 5])
        # q2's only match shares its camera, so it is skipped
        assert report.skipped_queries == ("q2",)
        assert "skipped" in caplog.text
        assert report.per_query_ap == {"q1": pytest.approx(5 / 6)}
        assert report.mAP == pytest.approx(5 / 6)
        assert report.cmc == {1: 1.0, 5: 1.0}

    def test_unknown_gallery_id(self):
        with pytest.raises(DataError):
            evaluate({"q1": ["g1", "nope"]}, self.queries, self.gallery)

    def test_all_skipped(self):
        with pytest.raises(ValueError):
            evaluate({"q2": ["g4"]}, self.queries, self.gallery)

    def test_map_is_mean_of_aps(self):
        rng = np.random.default_rng(0)
        gallery = {f"g{i}": obs(f"g{i}", f"id{i % 4}", 2, 0) for i in range(12)}
        queries = {f"q{i}": obs(f"q{i}", f"id{i}", 1, 0) for i in range(4)}
        rankings = {q: list(rng.permutation(sorted(gallery))) for q in queries}
        report = evaluate(rankings, queries, gallery)
        assert report.mAP == pytest.approx(np.mean(list(report.per_query_ap.values())), abs=1e-15)
