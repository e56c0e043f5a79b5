import numpy as np
import pytest

import riskmap as rm


def class_components(graph: rm.SpatialGraph, labels: np.ndarray, k: int) -> int:
    nodes = set(np.flatnonzero(labels == k).tolist())
    seen: set[int] = set()
    comps = 0
    for start in sorted(nodes):
        if start in seen:
            continue
        comps += 1
        stack = [start]
        seen.add(start)
        while stack:
            cur = stack.pop()
            for nb in graph.neighbors(cur):
                nb = int(nb)
                if nb in nodes and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
    return comps


class TestBlobScenario:
    def test_single_class(self):
        g = rm.build_hex_lattice(3, 3)
        sc = rm.make_blob_scenario(g, 1, [1e-3], rng=np.random.default_rng(0))
        assert np.all(sc.true_labels == 0)

    def test_three_class_paper_analog(self):
        g = rm.build_hex_lattice(30, 35)
        sc = rm.make_blob_scenario(g, 3, [1e-5, 1e-4, 1e-3],
                                   n_seeds_per_class=2, rng=np.random.default_rng(1))
        sizes = np.bincount(sc.true_labels, minlength=3)
        target = g.node_count / 3
        assert np.all(sizes >= 0.8 * target)
        assert np.all(sizes <= 1.2 * target)
        np.testing.assert_array_equal(sc.true_risks, [1e-5, 1e-4, 1e-3])
        assert sc.populations.min() >= 1
        assert sc.populations.max() <= 32039
        for k in range(3):
            assert class_components(g, sc.true_labels, k) <= 2

    def test_five_class_levels(self):
        g = rm.build_hex_lattice(20, 20)
        risks = [1e-5, 5e-5, 1e-4, 5e-4, 1e-3]
        sc = rm.make_blob_scenario(g, 5, risks, rng=np.random.default_rng(2))
        np.testing.assert_array_equal(sc.true_risks, risks)
        assert set(np.unique(sc.true_labels)) == set(range(5))

    def test_population_range_respected(self):
        g = rm.build_hex_lattice(10, 10)
        sc = rm.make_blob_scenario(g, 2, [1e-4, 1e-3], pop_range=(5, 50),
                                   rng=np.random.default_rng(3))
        assert sc.populations.min() >= 5
        assert sc.populations.max() <= 50

    def test_deterministic_given_seed(self):
        g = rm.build_hex_lattice(8, 8)
        a = rm.make_blob_scenario(g, 3, [1e-5, 1e-4, 1e-3], rng=np.random.default_rng(9))
        b = rm.make_blob_scenario(g, 3, [1e-5, 1e-4, 1e-3], rng=np.random.default_rng(9))
        np.testing.assert_array_equal(a.true_labels, b.true_labels)
        np.testing.assert_array_equal(a.populations, b.populations)


class TestPermuteRisks:
    def test_identity(self):
        g = rm.build_hex_lattice(4, 4)
        sc = rm.make_blob_scenario(g, 3, [1e-5, 1e-4, 1e-3], rng=np.random.default_rng(0))
        out = rm.permute_risks(sc, [0, 1, 2])
        np.testing.assert_array_equal(out.true_risks, sc.true_risks)
        np.testing.assert_array_equal(out.true_labels, sc.true_labels)

    def test_three_class_swap_of_top_levels(self):
        g = rm.build_hex_lattice(4, 4)
        sc = rm.make_blob_scenario(g, 3, [1e-5, 1e-4, 1e-3], rng=np.random.default_rng(0))
        out = rm.permute_risks(sc, [0, 2, 1])
        np.testing.assert_array_equal(out.true_risks, [1e-5, 1e-3, 1e-4])
        np.testing.assert_array_equal(out.true_labels, sc.true_labels)

    def test_five_class_permutation(self):
        g = rm.build_hex_lattice(5, 5)
        sc = rm.make_blob_scenario(g, 5, [1e-5, 5e-5, 1e-4, 5e-4, 1e-3],
                                   rng=np.random.default_rng(0))
        out = rm.permute_risks(sc, [1, 3, 2, 0, 4])
        np.testing.assert_array_equal(out.true_risks, [5e-5, 5e-4, 1e-4, 1e-5, 1e-3])

    def test_invalid_permutation(self):
        g = rm.build_hex_lattice(3, 3)
        sc = rm.make_blob_scenario(g, 2, [1e-4, 1e-3], rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            rm.permute_risks(sc, [0, 0])


class TestSampleCounts:
    def test_zero_risks_give_zero_counts(self):
        g = rm.build_hex_lattice(5, 5)
        sc = rm.make_blob_scenario(g, 2, [0.0, 0.0], rng=np.random.default_rng(0))
        data = rm.sample_counts(sc, np.random.default_rng(1))
        assert data.counts.sum() == 0

    def test_single_cell_moment(self):
        g = rm.build_hex_lattice(1, 1)
        sc = rm.Scenario(graph=g, true_labels=np.array([0]),
                         true_risks=np.array([1e-3]), populations=np.array([10000]))
        rng = np.random.default_rng(2)
        draws = np.array([rm.sample_counts(sc, rng).counts[0] for _ in range(10000)])
        assert abs(draws.mean() - 10.0) <= 0.3

    def test_aggregate_class_moments(self):
        g = rm.build_hex_lattice(12, 12)
        risks = np.array([1e-4, 1e-3, 1e-2])
        sc = rm.make_blob_scenario(g, 3, risks, pop_range=(100, 5000),
                                   rng=np.random.default_rng(3))
        rng = np.random.default_rng(4)
        tot_y = np.zeros(3)
        tot_n = np.zeros(3)
        reps = 50
        for _ in range(reps):
            data = rm.sample_counts(sc, rng)
            for k in range(3):
                mask = sc.true_labels == k
                tot_y[k] += data.counts[mask].sum()
                tot_n[k] += data.populations[mask].sum()
        rate = tot_y / tot_n
        se = np.sqrt(risks / tot_n)
        assert np.all(np.abs(rate - risks) <= 3 * se)

    def test_deterministic_given_seed(self):
        g = rm.build_hex_lattice(6, 6)
        sc = rm.make_blob_scenario(g, 2, [1e-4, 1e-3], rng=np.random.default_rng(5))
        a = rm.sample_counts(sc, np.random.default_rng(6))
        b = rm.sample_counts(sc, np.random.default_rng(6))
        np.testing.assert_array_equal(a.counts, b.counts)

    def test_zero_population_nodes_have_zero_counts(self):
        g = rm.build_hex_lattice(2, 2)
        sc = rm.Scenario(graph=g, true_labels=np.zeros(4, dtype=int),
                         true_risks=np.array([0.5]),
                         populations=np.array([0, 10, 0, 5]))
        data = rm.sample_counts(sc, np.random.default_rng(0))
        assert data.counts[0] == 0 and data.counts[2] == 0
