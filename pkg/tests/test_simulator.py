import dataclasses
import math

import numpy as np
import pytest

from feedresponse import core, simulator as sim
from feedresponse.errors import ModelDomainError
from feedresponse.types import ModelParams, PopulationParams, Stance

from _oracles import make_user


@pytest.fixture(scope="module")
def params():
    return ModelParams(mu=14.0, lam=14.0, views_per_post=38.0, p_act=0.12)


@pytest.fixture(scope="module")
def cfg():
    return sim.PopulationConfig(user_count=300, advocate_post_count=60,
                                typical_friend_rate=1.61)


class TestSpecs:
    def test_stance_mix_must_sum_to_one(self):
        with pytest.raises(ModelDomainError, match="sum to 1"):
            sim.StanceMix(0.5, 0.4, 0.2)
        with pytest.raises(ModelDomainError):
            sim.StanceMix(-0.1, 0.6, 0.5)

    def test_beta_spec_mean(self):
        assert sim.BetaSpec(2.0, 6.0).mean == pytest.approx(0.25)

    def test_lognormal_spec_rejects_negative_spread(self):
        with pytest.raises(ModelDomainError):
            sim.LogNormalSpec(0.3, -1.0)

    def test_config_validation(self):
        with pytest.raises(ModelDomainError):
            sim.PopulationConfig(0, 60, 1.61)
        with pytest.raises(ModelDomainError,
                           match="typical_friend_rate"):
            sim.PopulationConfig(10, 60, 0.0)
        with pytest.raises(ModelDomainError):
            sim.PopulationConfig(10, 60, 1.61, observation_days=0.0)

    def test_population_params_passthrough(self, cfg):
        pop = cfg.population_params()
        assert pop == PopulationParams("advocate", 60, 1.61)


class TestGeneratePopulation:
    def test_deterministic(self, cfg):
        a, pa = sim.generate_population(cfg, 7)
        b, pb = sim.generate_population(cfg, 7)
        assert a == b
        assert np.array_equal(pa, pb)

    def test_seed_changes_output(self, cfg):
        a, _ = sim.generate_population(cfg, 7)
        b, _ = sim.generate_population(cfg, 8)
        assert a != b

    def test_growing_the_population_keeps_existing_users(self):
        small = sim.PopulationConfig(50, 60, 1.61)
        large = sim.PopulationConfig(120, 60, 1.61)
        ua, pa = sim.generate_population(small, 7)
        ub, pb = sim.generate_population(large, 7)
        assert ua == ub[:50]
        assert np.array_equal(pa, pb[:50])

    def test_record_shape(self, cfg):
        users, p_topic = sim.generate_population(cfg, 7)
        assert [u.user_id for u in users[:2]] == ["u000000", "u000001"]
        assert len(p_topic) == len(users)
        for u in users:
            assert u.friend_count >= 1
            assert u.posting_rate > 0
            assert 0 <= u.topic_posts <= u.total_posts
            assert u.responses == 0
        assert np.all((p_topic > 0) & (p_topic < 1))

    def test_stance_mix_roughly_respected(self):
        big = sim.PopulationConfig(3000, 60, 1.61)
        users, _ = sim.generate_population(big, 11)
        frac = {s: sum(u.stance is s for u in users) / 3000
                for s in Stance}
        assert frac[Stance.SUPPORTER] == pytest.approx(0.60, abs=0.05)
        assert frac[Stance.OPPONENT] == pytest.approx(0.15, abs=0.05)
        assert frac[Stance.NEUTRAL] == pytest.approx(0.25, abs=0.05)


class TestSimulateResponses:
    def test_deterministic_and_bounded(self, cfg, params):
        users, p_topic = sim.generate_population(cfg, 7)
        pop = cfg.population_params()
        a = sim.simulate_responses(users, p_topic, pop, params, 7)
        b = sim.simulate_responses(users, p_topic, pop, params, 7)
        assert np.array_equal(a, b)
        assert a.dtype == np.int64
        assert np.all((a >= 0) & (a <= pop.advocate_post_count))

    def test_opponents_never_respond(self, cfg, params):
        users, p_topic = sim.generate_population(cfg, 7)
        pop = cfg.population_params()
        resp = sim.simulate_responses(users, p_topic, pop, params, 7)
        for u, M in zip(users, resp):
            if u.stance is Stance.OPPONENT:
                assert M == 0

    def test_total_close_to_expectation(self, params):
        cfg = sim.PopulationConfig(2000, 60, 1.61)
        users, pop, trace = sim.simulate_population(cfg, params, 13)
        expected = float((trace.true_response_scale * trace.true_p_topic
                          * pop.advocate_post_count).sum())
        total = trace.observed_responses.sum()
        # responses are conditionally binomial, so sd <= sqrt(mean)
        assert abs(total - expected) < 5.0 * math.sqrt(expected)


class TestSimulatePopulation:
    def test_trace_is_aligned(self, cfg, params):
        users, pop, trace = sim.simulate_population(cfg, params, 7)
        assert list(trace.user_ids) == [u.user_id for u in users]
        assert np.array_equal(trace.observed_responses,
                              np.array([u.responses for u in users]))

    def test_matches_generate_then_respond(self, cfg, params):
        gen_users, p_topic = sim.generate_population(cfg, 7)
        users, pop, trace = sim.simulate_population(cfg, params, 7)
        stripped = [dataclasses.replace(u, responses=0) for u in users]
        assert stripped == gen_users
        assert np.array_equal(trace.true_p_topic, p_topic)

    def test_truth_columns_consistent(self, cfg, params):
        users, pop, trace = sim.simulate_population(cfg, params, 7)
        want_scale = core.response_scales(users, pop, params)
        np.testing.assert_array_equal(trace.true_response_scale,
                                      want_scale)
        assert np.all((trace.true_p_visible >= 0)
                      & (trace.true_p_visible <= 1))


class TestReplicates:
    def test_deterministic_counts(self, cfg, params):
        users, _ = sim.generate_population(cfg, 7)
        pop = cfg.population_params()
        a = sim.replicate_user_responses(users[0], pop, params, 5, 500)
        b = sim.replicate_user_responses(users[0], pop, params, 5, 500)
        assert np.array_equal(a, b)
        assert a.shape == (500,)
        assert a.dtype == np.int64

    def test_mean_tracks_the_distribution(self, cfg, params):
        users, _ = sim.generate_population(cfg, 7)
        pop = cfg.population_params()
        u = users[0]
        reps = sim.replicate_user_responses(u, pop, params, 5, 4000)
        dist = core.response_distribution(u, pop, params)
        se = dist.std / math.sqrt(len(reps))
        assert abs(reps.mean() - dist.mean) < 4.0 * se


class TestEventStream:
    def _probe_user(self, rho):
        # friends * 1.0 = receive, rate * 1.0 = visit, so rho = 1 / rate
        return make_user(uid="probe", rate=1.0 / rho, friends=1, m=1, n=1)

    def _setup(self, rho):
        pop = PopulationParams("adv", 10, 1.0)
        params = ModelParams(14.0, 14.0, 1.0, 0.5)
        return self._probe_user(rho), pop, params

    def test_positions_follow_the_geometric_law(self):
        u, pop, params = self._setup(2.0)
        n = 20_000
        duration = 5 * n / (u.posting_rate * params.views_per_post)
        res = sim.simulate_event_stream(u, pop, params, duration, n, 3)
        assert res.rho == pytest.approx(2.0, rel=1e-12)
        assert res.position_counts.sum() == res.n_samples
        assert res.n_samples <= n
        sd = math.sqrt(res.rho * (1 + res.rho) / res.n_samples)
        assert abs(res.mean_position - res.rho) < 3 * sd
        assert sim.position_law_tv(res) < 0.02

    def test_deterministic(self):
        u, pop, params = self._setup(2.0)
        a = sim.simulate_event_stream(u, pop, params, 1.2e5, 1000, 3)
        b = sim.simulate_event_stream(u, pop, params, 1.2e5, 1000, 3)
        assert np.array_equal(a.position_counts, b.position_counts)

    def test_empirical_pmf_normalizes(self):
        u, pop, params = self._setup(0.5)
        res = sim.simulate_event_stream(u, pop, params, 3e5, 2000, 4)
        assert res.empirical_pmf.sum() == pytest.approx(1.0, abs=1e-12)

    def test_window_must_cover_enough_visits(self):
        u, pop, params = self._setup(2.0)
        with pytest.raises(ModelDomainError, match="too short"):
            sim.simulate_event_stream(u, pop, params, 10.0, 1000, 3)

    def test_needs_live_rates(self):
        pop = PopulationParams("adv", 10, 1.0)
        params = ModelParams(14.0, 14.0, 1.0, 0.5)
        silent = make_user(rate=0.0, friends=1, m=1, n=1)
        with pytest.raises(ModelDomainError):
            sim.simulate_event_stream(silent, pop, params, 1e5, 100, 3)
