import numpy as np
import pytest

import riskmap as rm
import riskmap.inference as inf
from riskmap.strategies import _two_phase_fit

from conftest import tri_params


@pytest.fixture(scope="module")
def small_scenario():
    g = rm.build_hex_lattice(8, 9)
    sc = rm.make_blob_scenario(g, 3, [1e-4, 1e-3, 1e-2], n_seeds_per_class=1,
                               rng=np.random.default_rng(21))
    data = rm.sample_counts(sc, np.random.default_rng(22))
    return g, sc, data


class TestAverageRisk:
    def test_no_cases(self):
        assert rm.average_risk(rm.ObservedData([0, 0], [10, 10])) == 0.0

    def test_hand_value(self):
        assert rm.average_risk(rm.ObservedData([2, 0], [100, 300])) == pytest.approx(0.005)

    def test_saturated(self):
        assert rm.average_risk(rm.ObservedData([7, 3], [7, 3])) == 1.0

    def test_empty_population(self):
        with pytest.raises(rm.EmptyPopulationError):
            rm.average_risk(rm.ObservedData([0, 0], [0, 0]))


class TestDrawTra:
    def test_single_class_forced_to_average(self):
        data = rm.ObservedData([2, 0], [100, 300])
        draw = rm.draw_tra(data, 1, np.random.default_rng(0))
        assert draw.risks[0] == pytest.approx(0.005, rel=1e-14)

    def test_constraint_holds_exactly_and_risks_positive(self):
        rng = np.random.default_rng(1)
        pops = rng.integers(1, 5000, size=40)
        counts = rng.poisson(pops * 1e-3)
        data = rm.ObservedData(counts, pops)
        avg = rm.average_risk(data)
        for _ in range(200):
            draw = rm.draw_tra(data, 4, rng)
            assert np.all(draw.risks > 0)
            assert np.all(np.diff(draw.risks) >= 0)
            assert float(draw.shares @ draw.risks) == pytest.approx(avg, rel=1e-12)
            assert draw.shares.sum() == pytest.approx(1.0, rel=1e-12)

    def test_deterministic_given_seed(self):
        data = rm.ObservedData([2, 5, 0, 1], [100, 300, 50, 80])
        a = [rm.draw_tra(data, 3, np.random.default_rng(42)).risks for _ in range(1)]
        b = [rm.draw_tra(data, 3, np.random.default_rng(42)).risks for _ in range(1)]
        np.testing.assert_array_equal(a, b)
        seq1 = np.random.default_rng(7)
        seq2 = np.random.default_rng(7)
        for _ in range(10):
            np.testing.assert_array_equal(rm.draw_tra(data, 2, seq1).risks,
                                          rm.draw_tra(data, 2, seq2).risks)

    def test_rejection_exhaustion_raises(self):
        # Ratio pool dominated by values far above the average risk, so a
        # draw that picks two large ratios must be discarded; max_rejects=1
        # then raises for seeds whose first draw rejects.
        data = rm.ObservedData([100, 100, 100, 0], [1, 1, 1, 10000])
        raised = 0
        for seed in range(30):
            try:
                rm.draw_tra(data, 3, np.random.default_rng(seed), max_rejects=1)
            except rm.RejectionExhaustedError:
                raised += 1
        assert raised > 0

    def test_rejection_rate_finite_on_simulated_scenario(self, small_scenario):
        _, _, data = small_scenario
        rejected = 0
        for seed in range(1000):
            try:
                rm.draw_tra(data, 3, np.random.default_rng(seed), max_rejects=1)
            except rm.RejectionExhaustedError:
                rejected += 1
        assert rejected / 1000 < 0.99

    def test_needs_enough_observed_units(self):
        data = rm.ObservedData([1, 0], [10, 0])
        with pytest.raises(ValueError):
            rm.draw_tra(data, 3, np.random.default_rng(0))


class TestDrawRand:
    def test_range_and_order(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            draw = rm.draw_rand(3, rng, upper=1.5)
            assert np.all(draw.risks > 0)
            assert np.all(draw.risks <= 1.5)
            assert np.all(np.diff(draw.risks) >= 0)

    def test_deterministic_given_seed(self):
        a = rm.draw_rand(4, np.random.default_rng(3)).risks
        b = rm.draw_rand(4, np.random.default_rng(3)).risks
        np.testing.assert_array_equal(a, b)

    def test_single_class(self):
        draw = rm.draw_rand(1, np.random.default_rng(5), upper=2.0)
        assert draw.risks.shape == (1,)
        assert 0 < draw.risks[0] <= 2.0


class TestSearchRunSelect:
    def test_single_restart_no_phase_split_equals_plain_fit(self, small_scenario):
        g, _, data = small_scenario
        strategy = rm.StrategySpec(rm.StrategyKind.TRAJECTORY, restarts=1,
                                   search2=False, seed=99)
        got = rm.search_run_select(data, g, 3, strategy)
        rng = np.random.default_rng(np.random.SeedSequence(99).spawn(1)[0])
        draw = rm.draw_tra(data, 3, rng)
        want = rm.vem_fit(data, g, draw.params(rm.InteractionKind.TRI_DIAGONAL))
        assert got.log_likelihood == want.log_likelihood
        np.testing.assert_array_equal(got.params.risks, want.params.risks)
        np.testing.assert_array_equal(got.labels, want.labels)

    def test_selection_is_max_over_restarts(self, small_scenario):
        g, _, data = small_scenario
        strategy = rm.StrategySpec(rm.StrategyKind.TRAJECTORY, restarts=5, seed=17)
        best = rm.search_run_select(data, g, 3, strategy)
        seeds = np.random.SeedSequence(17).spawn(5)
        lls = []
        for s in seeds:
            draw = rm.draw_tra(data, 3, np.random.default_rng(s))
            fit = _two_phase_fit(data, g, draw, rm.InteractionKind.TRI_DIAGONAL,
                                 inf.FitOptions(), True)
            lls.append(fit.log_likelihood)
        assert best.log_likelihood == max(lls)
        assert best.restart_index == int(np.argmax(lls))

    def test_phase_one_keeps_unit_interaction(self, small_scenario):
        g, _, data = small_scenario
        draw = rm.draw_tra(data, 3, np.random.default_rng(0))
        phase1 = rm.vem_fit(data, g, draw.params(rm.InteractionKind.TRI_DIAGONAL),
                            inf.FitOptions(fix_b=1.0))
        assert np.all(phase1.b_trace == 1.0)

    def test_nonspatial_screen_then_spatial(self, small_scenario):
        g, sc, data = small_scenario
        strategy = rm.StrategySpec(rm.StrategyKind.NONSPATIAL_EM, restarts=6, seed=5)
        fit = rm.search_run_select(data, g, 3, strategy)
        assert fit.params.interaction.b >= 0
        assert fit.ll_trace.size >= 1
        rep = rm.evaluate_fit(fit, sc)
        assert rep.dsc.mean() > 0.3

    def test_all_restarts_failed(self, small_scenario):
        g, _, _ = small_scenario
        # Only two observed units but K=5: every trajectory draw raises.
        tiny = rm.ObservedData([1, 0] + [0] * 70, [10, 20] + [0] * 70)
        strategy = rm.StrategySpec(rm.StrategyKind.TRAJECTORY, restarts=3, seed=1)
        with pytest.raises(rm.AllRestartsFailedError):
            rm.search_run_select(tiny, g, 5, strategy)

    def test_threads_do_not_change_result(self, small_scenario):
        g, _, data = small_scenario
        serial = rm.search_run_select(
            data, g, 3, rm.StrategySpec(rm.StrategyKind.TRAJECTORY, restarts=4, seed=3))
        threaded = rm.search_run_select(
            data, g, 3, rm.StrategySpec(rm.StrategyKind.TRAJECTORY, restarts=4, seed=3,
                                        threads=4))
        assert serial.log_likelihood == threaded.log_likelihood
        np.testing.assert_array_equal(serial.labels, threaded.labels)

    def test_user_fixed_interaction_collapses_phases(self, small_scenario):
        g, _, data = small_scenario
        strategy = rm.StrategySpec(rm.StrategyKind.TRAJECTORY, restarts=2, seed=11)
        fit = rm.search_run_select(data, g, 3, strategy, inf.FitOptions(fix_b=0.0))
        assert fit.params.interaction.b == 0.0
        assert np.all(fit.b_trace == 0.0)


class TestFiveClassSmallBudget:
    def test_trajectory_beats_random_on_top_class_with_ten_restarts(self):
        g = rm.build_hex_lattice(30, 35)
        sc = rm.make_blob_scenario(g, 5, [1e-5, 5e-5, 1e-4, 5e-4, 1e-3],
                                   n_seeds_per_class=1, rng=np.random.default_rng(31))
        data = rm.sample_counts(sc, np.random.default_rng(32))
        fits = {}
        for kind in (rm.StrategyKind.TRAJECTORY, rm.StrategyKind.RANDOM):
            strat = rm.StrategySpec(kind, restarts=10, seed=77)
            fits[kind] = rm.evaluate_fit(rm.search_run_select(data, g, 5, strat), sc)
        assert fits[rm.StrategyKind.TRAJECTORY].dsc[-1] >= fits[rm.StrategyKind.RANDOM].dsc[-1]
