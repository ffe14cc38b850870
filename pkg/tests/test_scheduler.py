import numpy as np
import pytest

from asyncadmm import (ConstraintSystem, Free, Graph, Quadratic, RngStream,
                       build_partition, build_reformulation,
                       derive_probabilities, sample_block,
                       single_block_partition, uniform_probs)
from asyncadmm.errors import (ImproperPartition, NonCoveringPartition,
                              ZeroProbabilityBlock)

def edge_problem(num_nodes=3, graph=None):
    g = graph or Graph.path(num_nodes)
    terms = tuple(Quadratic(np.array([float(i)])) for i in range(g.num_nodes))
    return build_reformulation(g, terms, tuple(Free(1) for _ in terms), 1.0)


class TestBuildPartition:
    def test_per_edge_blocks_are_proper(self):
        reform = edge_problem(3)
        part = reform.partition
        assert len(part.blocks) == 2
        # edge blocks own exactly their two endpoints
        for e, (i, j) in enumerate(reform.graph.edges):
            assert set(part.component_map[e].tolist()) == {i, j}

    def test_single_block_is_proper(self):
        reform = edge_problem(4)
        cs = reform.problem.constraints
        part = build_partition(reform.problem.z_set, cs, [range(cs.W)])
        assert len(part.blocks) == 1
        assert part.component_map[0].tolist() == [0, 1, 2, 3]

    def test_coupled_rows_split_rejected(self):
        reform = edge_problem(2, graph=Graph(2, ((0, 1),)))
        cs = reform.problem.constraints
        with pytest.raises(ImproperPartition):
            build_partition(reform.problem.z_set, cs, [[0], [1]])

    def test_non_cover_rejected(self):
        reform = edge_problem(3)
        cs = reform.problem.constraints
        with pytest.raises(NonCoveringPartition):
            build_partition(reform.problem.z_set, cs, [[0, 1]])
        with pytest.raises(NonCoveringPartition):
            build_partition(reform.problem.z_set, cs, [[0, 1], [1, 2, 3]])

    def test_component_union_covers_everything(self):
        for g in (Graph.cycle(6), Graph.star(5), Graph.path(4)):
            reform = edge_problem(graph=g)
            part = reform.partition
            union = set()
            for comps in part.component_map:
                union.update(comps.tolist())
            assert union == set(range(g.num_nodes))


class TestDeriveProbabilities:
    def test_two_blocks_half_each(self):
        cs = ConstraintSystem(n=1, N=2, W=2,
                              entries=((0, 0, 1.0), (1, 1, 1.0)),
                              h_diag=np.array([-1.0, -1.0]))
        part = build_partition(Free(2), cs, [[0], [1]])
        dist = derive_probabilities(part, [0.5, 0.5])
        np.testing.assert_allclose(dist.alpha, [0.5, 0.5])
        np.testing.assert_allclose(dist.lam, [0.5, 0.5])

    def test_single_block_full_activation(self):
        reform = edge_problem(3)
        cs = reform.problem.constraints
        part = single_block_partition(cs)
        dist = derive_probabilities(part, [1.0])
        np.testing.assert_allclose(dist.lam, 1.0)
        np.testing.assert_allclose(dist.alpha, 1.0)
        np.testing.assert_allclose(dist.weight_diag, 1.0)

    def test_star_center_always_active(self):
        # enumeration oracle: alpha_i = sum of probs of blocks containing i
        m = 4
        reform = edge_problem(graph=Graph.star(m + 1))
        part = reform.partition
        probs = uniform_probs(part)
        expect = np.zeros(m + 1)
        for b, comps in enumerate(part.component_map):
            for i in comps:
                expect[i] += probs[b]
        dist = derive_probabilities(part, probs)
        np.testing.assert_allclose(dist.alpha, expect)
        assert dist.alpha[0] == pytest.approx(1.0)
        np.testing.assert_allclose(dist.alpha[1:], 1.0 / m)

    def test_weight_times_lambda_is_one(self):
        reform = edge_problem(graph=Graph.cycle(5))
        dist = derive_probabilities(reform.partition,
                                    [0.1, 0.2, 0.3, 0.25, 0.15])
        np.testing.assert_array_equal(dist.weight_diag * dist.lam, 1.0)

    def test_zero_probability_rejected(self):
        reform = edge_problem(3)
        with pytest.raises(ZeroProbabilityBlock):
            derive_probabilities(reform.partition, [1.0, 0.0])
        with pytest.raises(ZeroProbabilityBlock):
            derive_probabilities(reform.partition, [0.6, 0.6])


class TestRngStream:
    def test_same_seed_same_sequence(self):
        a = RngStream(42)
        b = RngStream(42)
        assert [a.next_u64() for _ in range(10)] == \
            [b.next_u64() for _ in range(10)]
        assert a.counter == 10

    def test_known_splitmix64_values(self):
        # published SplitMix64 outputs for seed 1234567
        r = RngStream(1234567)
        assert r.next_u64() == 6457827717110365317
        assert r.next_u64() == 3203168211198807973

    def test_doubles_in_unit_interval(self):
        r = RngStream(9)
        us = [r.next_double() for _ in range(1000)]
        assert min(us) >= 0.0 and max(us) < 1.0


class TestSampleBlock:
    def test_degenerate_distribution(self):
        reform = edge_problem(2, graph=Graph(2, ((0, 1),)))
        dist = derive_probabilities(reform.partition, [1.0])
        rng = RngStream(0)
        assert all(sample_block(dist, rng) == 0 for _ in range(100))

    def test_empirical_frequencies(self):
        cs = ConstraintSystem(n=1, N=2, W=2,
                              entries=((0, 0, 1.0), (1, 1, 1.0)),
                              h_diag=np.array([-1.0, -1.0]))
        part = build_partition(Free(2), cs, [[0], [1]])
        dist = derive_probabilities(part, [0.5, 0.5])
        rng = RngStream(123)
        draws = 100_000
        ones = sum(sample_block(dist, rng) for _ in range(draws))
        assert abs(ones / draws - 0.5) < 0.01

    def test_row_frequency_within_three_sigma(self):
        reform = edge_problem(graph=Graph.cycle(5))
        probs = np.array([0.1, 0.15, 0.2, 0.25, 0.3])
        dist = derive_probabilities(reform.partition, probs)
        rng = RngStream(77)
        draws = 100_000
        counts = np.zeros(len(probs))
        for _ in range(draws):
            counts[sample_block(dist, rng)] += 1
        for b, prob in enumerate(probs):
            sigma = np.sqrt(prob * (1 - prob) / draws)
            assert abs(counts[b] / draws - prob) < 3.0 * sigma

    def test_determinism_across_streams(self):
        reform = edge_problem(graph=Graph.cycle(4))
        dist = derive_probabilities(reform.partition, uniform_probs(reform.partition))
        seq1 = [sample_block(dist, RngStream(5)) for _ in range(1)]
        a, b = RngStream(5), RngStream(5)
        s1 = [sample_block(dist, a) for _ in range(50)]
        s2 = [sample_block(dist, b) for _ in range(50)]
        assert s1 == s2
