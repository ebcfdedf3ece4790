import itertools

import numpy as np
import pytest

from bcvnn.data import SyntheticSpec, generate_synthetic
from bcvnn.errors import ConfigError, EvaluationError, SearchInfeasible
from bcvnn.layers import (MODE_ORDER, NetworkSpec, PartMode, activation,
                          dense, dropout)
from bcvnn.search import (MAX_ACC, MIN_ECE, Constraint, FitnessRecord,
                          MemoizedEvaluator, Objective, SearchConfig,
                          crossover, dropout_count, enumerate_all, evaluate,
                          genome_from_string, genome_to_string,
                          make_pipeline_evaluator, make_table_evaluator,
                          mutate, pareto_front, random_genome, run_search,
                          select, weighted)
from bcvnn.train import TrainConfig

R, I, B = PartMode.REAL, PartMode.IMAG, PartMode.BOTH


def random_table(rng, n):
    return {genome: (float(rng.uniform(0.5, 1.0)), float(rng.uniform(0.0, 0.3)))
            for genome in itertools.product(MODE_ORDER, repeat=n)}


class TestGenomes:
    def test_dropout_count_fixtures(self):
        assert dropout_count((B, B, B)) == 6
        assert dropout_count((I, I, B)) == 4
        assert dropout_count((I, R, I)) == 3
        assert dropout_count((R, B, R)) == 4

    def test_string_round_trip(self):
        genome = (R, B, I)
        assert genome_to_string(genome) == "R-B-I"
        assert genome_from_string("R-B-I") == genome
        assert genome_from_string("rbi") == genome

    def test_bad_strings(self):
        with pytest.raises(ConfigError):
            genome_from_string("")
        with pytest.raises(ConfigError):
            genome_from_string("R-X-B")

    def test_random_genome_uses_all_modes(self):
        rng = np.random.default_rng(0)
        seen = set()
        for _ in range(100):
            seen.update(random_genome(3, rng))
        assert seen == {R, I, B}


class TestObjective:
    def test_max_acc(self):
        assert MAX_ACC.fitness(0.9, 0.5) == 0.9

    def test_min_ece(self):
        assert MIN_ECE.fitness(0.9, 0.05) == -0.05

    def test_weighted(self):
        obj = weighted(2.0, 1.0)
        assert obj.fitness(0.8, 0.1) == pytest.approx(2 * 0.8 - 0.1)

    def test_validation(self):
        with pytest.raises(ConfigError):
            Objective("maximize")
        with pytest.raises(ConfigError):
            weighted(-1.0, 1.0)
        with pytest.raises(ConfigError):
            weighted(0.0, 0.0)


class TestMemoization:
    def test_second_lookup_is_free(self):
        calls = []

        def fn(genome):
            calls.append(genome)
            return 0.9, 0.1

        mem = MemoizedEvaluator(fn)
        assert mem((R, I)) == (0.9, 0.1)
        assert mem((R, I)) == (0.9, 0.1)
        assert len(calls) == 1
        assert mem.calls == 1
        mem((B, B))
        assert mem.calls == 2

    def test_string_genomes_share_cache_with_tuples(self):
        mem = MemoizedEvaluator(lambda g: (0.5, 0.2))
        mem("R-I")
        mem((R, I))
        assert mem.calls == 1

    def test_failure_wraps_with_genome(self):
        def fn(genome):
            raise RuntimeError("boom")

        mem = MemoizedEvaluator(fn)
        with pytest.raises(EvaluationError) as info:
            mem((R, B))
        assert info.value.genome == (R, B)
        assert "R-B" in str(info.value)

    def test_table_evaluator(self):
        table = {"R-I": (0.7, 0.2), (B, B): (0.9, 0.1)}
        fn = make_table_evaluator(table)
        assert fn((R, I)) == (0.7, 0.2)
        assert fn((B, B)) == (0.9, 0.1)
        with pytest.raises(KeyError):
            fn((I, I))


class TestSelection:
    def records(self):
        def rec(genome, fitness, feasible=True):
            return FitnessRecord(genome, fitness, 0.1, dropout_count(genome),
                                 fitness, feasible)
        return rec

    def test_orders_by_fitness(self):
        rec = self.records()
        out = select([rec((R,), 0.5), rec((I,), 0.9), rec((B,), 0.7)], 2)
        assert [r.genome for r in out] == [(I,), (B,)]

    def test_tie_breaks_by_mode_order(self):
        rec = self.records()
        out = select([rec((B,), 0.9), rec((R,), 0.9), rec((I,), 0.9)], 3)
        assert [r.genome for r in out] == [(R,), (I,), (B,)]

    def test_infeasible_never_selected(self):
        rec = self.records()
        out = select([rec((B,), 0.99, feasible=False), rec((R,), 0.5)], 2)
        assert [r.genome for r in out] == [(R,)]

    def test_all_infeasible_raises(self):
        rec = self.records()
        with pytest.raises(SearchInfeasible):
            select([rec((B,), 0.9, feasible=False)], 1)


class TestVariation:
    def test_mutation_prob_zero_is_identity(self):
        rng = np.random.default_rng(1)
        genome = (R, I, B, R)
        assert mutate(genome, 0.0, rng) == genome

    def test_mutation_prob_one_changes_every_gene(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            genome = random_genome(4, rng)
            out = mutate(genome, 1.0, rng)
            assert all(a is not b for a, b in zip(genome, out))

    def test_mutation_seeded_trace(self):
        genome = (R, I, B, R, I)
        a = mutate(genome, 0.5, np.random.default_rng(9))
        b = mutate(genome, 0.5, np.random.default_rng(9))
        assert a == b

    def test_crossover_membership(self):
        rng = np.random.default_rng(3)
        pa = (R, R, R, R)
        pb = (B, B, B, B)
        counts = {R: 0, B: 0}
        for _ in range(1000):
            child = crossover(pa, pb, rng)
            for gene in child:
                assert gene in (R, B)
                counts[gene] += 1
        # roughly even split over 4000 genes
        assert abs(counts[R] - 2000) < 200

    def test_crossover_identical_parents(self):
        rng = np.random.default_rng(4)
        genome = (R, I, B)
        assert crossover(genome, genome, rng) == genome

    def test_crossover_length_mismatch(self):
        with pytest.raises(ConfigError):
            crossover((R, I), (R, I, B), np.random.default_rng(0))


class TestEnumerate:
    def test_space_sizes(self):
        fn = lambda g: (0.5, 0.1)
        assert len(enumerate_all(1, fn)) == 3
        assert len(enumerate_all(3, fn)) == 27
        assert len(enumerate_all(6, fn)) == 729

    def test_covers_every_genome_once(self):
        records = enumerate_all(3, lambda g: (0.5, 0.1))
        genomes = {r.genome for r in records}
        assert len(genomes) == 27

    def test_sorted_by_fitness(self):
        rng = np.random.default_rng(5)
        records = enumerate_all(3, make_table_evaluator(random_table(rng, 3)))
        fits = [r.fitness for r in records]
        assert fits == sorted(fits, reverse=True)

    def test_length_guard(self):
        fn = lambda g: (0.5, 0.1)
        with pytest.raises(ConfigError):
            enumerate_all(0, fn)
        with pytest.raises(ConfigError):
            enumerate_all(11, fn)


class TestPareto:
    def test_front_is_exactly_the_undominated_set(self):
        rng = np.random.default_rng(6)
        records = [FitnessRecord(g, float(rng.uniform(0, 1)), float(rng.uniform(0, 1)),
                                 dropout_count(g), 0.0, True)
                   for g in itertools.product(MODE_ORDER, repeat=3)]
        records = records[:50]
        front = pareto_front(records)
        front_set = {r.genome for r in front}

        def dominates(s, r):
            return (s.accuracy >= r.accuracy and s.ece <= r.ece
                    and (s.accuracy > r.accuracy or s.ece < r.ece))

        for r in records:
            dominated = any(dominates(s, r) for s in records)
            assert (r.genome in front_set) == (not dominated)

    def test_single_record(self):
        r = FitnessRecord((R,), 0.9, 0.1, 1, 0.9, True)
        assert pareto_front([r]) == [r]

    def test_duplicates_collapse(self):
        a = FitnessRecord((R,), 0.9, 0.1, 1, 0.9, True)
        b = FitnessRecord((R,), 0.1, 0.9, 1, 0.1, True)
        assert pareto_front([a, b]) == [a]


class TestRunSearch:
    def test_matches_enumeration_on_random_tables(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            n = int(rng.integers(1, 5))
            table = random_table(rng, n)
            fn = make_table_evaluator(table)
            oracle = enumerate_all(n, fn)[0]
            # the n=4 space has 81 genomes; a long budget guarantees the
            # optimum is visited, and memoization keeps the cost flat
            config = SearchConfig(iterations=1000, seed=trial)
            result = run_search(config, fn, n)
            assert result.best.genome == oracle.genome, (trial, n)
            assert result.best.fitness == oracle.fitness

    def test_history_shape(self):
        rng = np.random.default_rng(8)
        fn = make_table_evaluator(random_table(rng, 2))
        config = SearchConfig(iterations=3, seed=0)
        result = run_search(config, fn, 2)
        assert len(result.history) == (3 + 1) * config.population_size
        generations = sorted({g for g, _ in result.history})
        assert generations == [0, 1, 2, 3]

    def test_bit_reproducible(self):
        rng = np.random.default_rng(9)
        fn = make_table_evaluator(random_table(rng, 3))
        config = SearchConfig(iterations=5, seed=4)
        a = run_search(config, fn, 3)
        b = run_search(config, fn, 3)
        assert a.best == b.best
        assert a.history == b.history
        assert a.pareto == b.pareto

    def test_constraint_filters_results(self):
        rng = np.random.default_rng(10)
        table = random_table(rng, 3)
        fn = make_table_evaluator(table)
        constraint = Constraint(max_dropout=3)  # forces single-part modes
        config = SearchConfig(iterations=40, seed=0, constraint=constraint)
        result = run_search(config, fn, 3)
        assert result.best.feasible
        assert result.best.dropout_count <= 3
        feasible_oracle = [r for r in enumerate_all(3, fn, constraint=constraint)
                           if r.feasible]
        assert len(feasible_oracle) == 8  # 2^3 single-part genomes of 27
        assert result.best.genome == feasible_oracle[0].genome
        for r in result.pareto:
            assert r.feasible

    def test_unsatisfiable_constraint_raises(self):
        fn = make_table_evaluator(random_table(np.random.default_rng(11), 3))
        config = SearchConfig(iterations=2, seed=0,
                              constraint=Constraint(max_dropout=2))
        with pytest.raises(SearchInfeasible):
            run_search(config, fn, 3)

    def test_zero_iterations_still_returns_best_of_init(self):
        rng = np.random.default_rng(12)
        fn = make_table_evaluator(random_table(rng, 2))
        result = run_search(SearchConfig(iterations=0, seed=1), fn, 2)
        assert result.best.feasible
        assert len(result.history) == 8

    def test_min_ece_objective(self):
        rng = np.random.default_rng(13)
        table = random_table(rng, 2)
        fn = make_table_evaluator(table)
        config = SearchConfig(iterations=30, seed=0, objective=MIN_ECE)
        result = run_search(config, fn, 2)
        assert result.best.ece == min(v[1] for v in table.values())

    def test_memoization_caps_evaluator_calls(self):
        rng = np.random.default_rng(14)
        mem = MemoizedEvaluator(make_table_evaluator(random_table(rng, 2)))
        run_search(SearchConfig(iterations=20, seed=0), mem, 2)
        assert mem.calls <= 9  # space size, not population x generations

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            SearchConfig(population_size=1)
        with pytest.raises(ConfigError):
            SearchConfig(mutation_prob=1.5)
        with pytest.raises(ConfigError):
            SearchConfig(iterations=-1)
        with pytest.raises(ConfigError):
            SearchConfig(seed=-2)

    def test_evaluator_failure_propagates(self):
        def fn(genome):
            raise RuntimeError("no data")

        with pytest.raises(EvaluationError):
            run_search(SearchConfig(iterations=1, seed=0), fn, 2)


class TestPipelineEvaluator:
    def test_deterministic_and_order_independent(self):
        ds = generate_synthetic(SyntheticSpec(classes=3, samples_per_class=12,
                                              feature_shape=(4,), seed=0))
        holdout = generate_synthetic(SyntheticSpec(classes=3, samples_per_class=6,
                                                   feature_shape=(4,), seed=1))
        spec = NetworkSpec((dense(6), activation(), dropout(0.8), dense(3)),
                           (4,), 3)
        cfg = TrainConfig(epochs=2, batch_size=12, seed=3)
        fn = make_pipeline_evaluator(spec, ds, holdout, cfg)
        a1 = fn((PartMode.REAL,))
        b1 = fn((PartMode.BOTH,))
        fn2 = make_pipeline_evaluator(spec, ds, holdout, cfg)
        b2 = fn2((PartMode.BOTH,))
        a2 = fn2((PartMode.REAL,))
        assert a1 == a2
        assert b1 == b2
        for acc, ece_value in (a1, b1):
            assert 0.0 <= acc <= 1.0
            assert 0.0 <= ece_value <= 1.0
