import numpy as np
import pytest

from streid.estimation import Protocol, extract_transitions, fit_transition_model, transition_prob
from streid.evaluation import evaluate
from streid.fusion import rank_all
from streid.simulator import (
    ConfigError,
    ScenarioConfig,
    SimilarityNoise,
    bundled_config,
    generate_scenario,
    load_config,
    oracle_transition_estimate,
    split_scenario,
    synth_similarity,
)
from streid.types import DataError

from conftest import obs


def chain_config(**overrides):
    doc = {
        "seed": 3,
        "cameras": {"states": [1, 1]},
        "transitions": [[[0, 1]], [[1, 0]]],
        "travel": {"default": [[50, 5, 1.0]]},
        "identities": {"count": 20, "hops": 6, "time_window": 1000},
    }
    doc.update(overrides)
    return load_config(doc)


class TestGenerate:
    def test_degenerate_chain(self):
        cfg = load_config(
            {
                "cameras": {"states": [1]},
                "transitions": [[[1.0]]],
                "travel": {"default": [[30, 3, 1.0]]},
                "identities": {"count": 1, "hops": 3},
            }
        )
        truth = generate_scenario(cfg)
        assert len(truth.observations) == 4
        assert {o.camera for o in truth.observations} == {0}
        ts = [o.timestamp for o in truth.observations]
        assert all(b > a for a, b in zip(ts, ts[1:]))

    def test_alternating_cameras(self):
        truth = generate_scenario(chain_config())
        for track in truth.by_identity().values():
            for a, b in zip(track, track[1:]):
                assert a.camera != b.camera
                assert abs((b.timestamp - a.timestamp) - 50) < 20

    def test_deterministic(self):
        assert generate_scenario(chain_config()) == generate_scenario(chain_config())

    def test_seed_matters(self):
        other = chain_config(seed=4)
        assert generate_scenario(chain_config()).observations != generate_scenario(other).observations

    def test_more_identities_keep_earlier_trajectories(self):
        small = generate_scenario(chain_config())
        big = generate_scenario(chain_config(identities={"count": 40, "hops": 6, "time_window": 1000}))
        assert big.observations[: len(small.observations)] == small.observations

    def test_pinned_arrival_state(self):
        cfg = load_config(
            {
                "cameras": {"states": [2, 3]},
                "transitions": [[[0, 1], [0, 1]], [[1, 0], [1, 0], [1, 0]]],
                "travel": {
                    "default": [[40, 4, 1.0]],
                    "rules": [{"from": 0, "to": 1, "law": [[40, 4, 1.0]], "arrival_state": 2}],
                },
                "identities": {"count": 30, "hops": 4},
            }
        )
        for o in generate_scenario(cfg).observations:
            if o.camera == 1 and not o.observation_id.endswith("_000"):
                assert o.state == 2

    def test_config_round_trip(self):
        cfg = bundled_config("demo")
        again = ScenarioConfig.from_dict(cfg.to_dict())
        assert generate_scenario(again) == generate_scenario(cfg)


class TestConfigValidation:
    def test_row_sum_names_row(self):
        with pytest.raises(ConfigError) as info:
            chain_config(transitions=[[[0, 1]], [[0.5, 0.4]]])
        assert info.value.path == "transitions[1][0]"

    def test_missing_travel_law(self):
        with pytest.raises(ConfigError, match="no travel law"):
            chain_config(travel={"rules": [{"from": 0, "to": 1, "law": [[50, 5, 1.0]]}]})

    def test_nonpositive_mean(self):
        with pytest.raises(ConfigError, match="mean"):
            chain_config(travel={"default": [[-5, 5, 1.0]]})

    def test_mixture_weights(self):
        with pytest.raises(ConfigError, match="weights"):
            chain_config(travel={"default": [[50, 5, 0.5], [60, 5, 0.2]]})

    def test_missing_section(self):
        with pytest.raises(ConfigError) as info:
            load_config({"cameras": {"states": [1]}})
        assert info.value.path == "transitions"

    def test_bad_shape(self):
        with pytest.raises(ConfigError) as info:
            chain_config(transitions=[[[0, 1, 0]], [[1, 0]]])
        assert info.value.path == "transitions[0][0]"


class TestSimilarity:
    def setup_method(self):
        self.truth = generate_scenario(chain_config())
        self.split = split_scenario(self.truth)

    def test_zero_noise(self):
        noise = SimilarityNoise(0.9, 0.0, 0.1, 0.0)
        sim = synth_similarity(self.truth, self.split.query, self.split.gallery, noise, seed=1)
        q_ids = [o.identity for o in self.split.query]
        g_ids = [o.identity for o in self.split.gallery]
        expected = np.where(np.equal.outer(q_ids, g_ids), 0.9, 0.1)
        assert np.array_equal(sim.scores, expected)

    def test_deterministic_and_clamped(self):
        noise = SimilarityNoise(0.9, 0.5, 0.1, 0.5)
        a = synth_similarity(self.truth, self.split.query, self.split.gallery, noise, seed=5)
        b = synth_similarity(self.truth, self.split.query, self.split.gallery, noise, seed=5)
        assert np.array_equal(a.scores, b.scores)
        assert a.scores.min() >= 0 and a.scores.max() <= 1

    def test_overlapping_splits(self):
        with pytest.raises(DataError):
            synth_similarity(self.truth, self.split.query, self.split.query)

    def test_overlapping_laws_hurt_visual_only(self):
        cfg = chain_config(identities={"count": 100, "hops": 2, "train_fraction": 0.5})
        truth = generate_scenario(cfg)
        split = split_scenario(truth)
        assert len({o.identity for o in split.query}) >= 40
        noise = SimilarityNoise(0.6, 0.15, 0.4, 0.15)
        sim = synth_similarity(truth, split.query, split.gallery, noise, seed=0)
        ranked = rank_all(split.query, split.gallery, sim, None, Protocol.VISUAL_ONLY)
        report = evaluate(
            ranked,
            {o.observation_id: o for o in split.query},
            {o.observation_id: o for o in split.gallery},
        )
        assert report.mAP < 1.0


def test_split_partitions_identities():
    truth = generate_scenario(bundled_config("demo"))
    split = split_scenario(truth)
    train_ids = {o.identity for o in split.train}
    test_ids = {o.identity for o in split.query} | {o.identity for o in split.gallery}
    assert not train_ids & test_ids
    assert len(split.train) + len(split.query) + len(split.gallery) == len(truth.observations)
    assert len({o.identity for o in split.query}) == len(split.query)


class TestOracle:
    def test_singleton(self):
        probs, counts = oracle_transition_estimate(
            [obs("a0", "A", 0, 0), obs("a1", "A", 1, 10), obs("b0", "B", 1, 3)]
        )
        assert counts.sum() == 1
        assert probs[0, 0, 1] == 1.0
        assert np.count_nonzero(probs) == 1

    def test_single_sighting_contributes_nothing(self):
        _, counts = oracle_transition_estimate([obs("a0", "A", 0, 0), obs("b0", "B", 1, 3)])
        assert counts.sum() == 0

    @pytest.mark.parametrize("name", ["demo", "ablation"])
    def test_matches_fitted_model(self, name):
        truth = generate_scenario(bundled_config(name))
        probs, counts = oracle_transition_estimate(truth)
        model = fit_transition_model(extract_transitions(truth.observations))
        for (i, s), row in model.instance_counts.items():
            for j in range(probs.shape[2]):
                assert row.get(j, 0) == counts[i, s, j]
                assert transition_prob(model, i, s, j, Protocol.P1) == probs[i, s, j]
        assert sum(sum(r.values()) for r in model.instance_counts.values()) == counts.sum()
