"""Evolutionary search over per-layer dropout part modes.

A genome assigns one PartMode per Bayesian layer, so a network with N
such layers spans a 3^N design space. The search keeps a fixed-size
population, selects the top feasible half by scalar fitness, and
refills with mutated and crossed-over offspring. ``enumerate_all``
walks the whole space and is the ground-truth oracle for small N.

Hardware pressure enters through ``dropout_count``: Real or Imag cost
one dropout unit, Both costs two, and constraints cap or floor that
count. Infeasible genomes stay in the history but never become parents.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, EvaluationError, SearchInfeasible
from .layers import MODE_ORDER, MODE_RANK, PartMode, apply_genome


@dataclass(frozen=True)
class Objective:
    """Scalarization of (accuracy, ece): higher fitness is better."""

    kind: str  # "max_acc" | "min_ece" | "weighted"
    w_acc: float = 1.0
    w_ece: float = 1.0

    def __post_init__(self):
        if self.kind not in ("max_acc", "min_ece", "weighted"):
            raise ConfigError(f"unknown objective kind {self.kind!r}")
        if self.kind == "weighted":
            if self.w_acc < 0 or self.w_ece < 0:
                raise ConfigError("objective weights must be >= 0")
            if self.w_acc == 0 and self.w_ece == 0:
                raise ConfigError("objective weights must not both be zero")

    def fitness(self, accuracy, ece) -> float:
        if self.kind == "max_acc":
            return accuracy
        if self.kind == "min_ece":
            return -ece
        return self.w_acc * accuracy - self.w_ece * ece


MAX_ACC = Objective("max_acc")
MIN_ECE = Objective("min_ece")


def weighted(w_acc, w_ece) -> Objective:
    return Objective("weighted", float(w_acc), float(w_ece))


@dataclass(frozen=True)
class Constraint:
    """Dropout-count bounds; None leaves a side open."""

    max_dropout: int | None = None
    min_dropout: int | None = None

    def allows(self, count) -> bool:
        if self.max_dropout is not None and count > self.max_dropout:
            return False
        if self.min_dropout is not None and count < self.min_dropout:
            return False
        return True


@dataclass(frozen=True)
class SearchConfig:
    population_size: int = 8
    mutation_portion: float = 0.5
    mutation_prob: float = 0.5
    crossover_prob: float = 0.5
    iterations: int = 10
    objective: Objective = MAX_ACC
    constraint: Constraint | None = None
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ConfigError("population_size must be >= 2")
        for name in ("mutation_portion", "mutation_prob", "crossover_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")


@dataclass(frozen=True)
class FitnessRecord:
    genome: tuple
    accuracy: float
    ece: float
    dropout_count: int
    fitness: float
    feasible: bool


def _coerce_genome(genome) -> tuple:
    if isinstance(genome, str):
        return genome_from_string(genome)
    modes = tuple(PartMode.from_letter(m) if isinstance(m, str) else m for m in genome)
    if not modes:
        raise ConfigError("genome must have at least one mode")
    for m in modes:
        if not isinstance(m, PartMode):
            raise ConfigError(f"genome entries must be part modes, got {m!r}")
    return modes


def genome_to_string(genome) -> str:
    return "-".join(m.value for m in genome)


def genome_from_string(text) -> tuple:
    letters = [p for p in text.replace("-", "").strip().upper()]
    if not letters:
        raise ConfigError("empty genome string")
    return tuple(PartMode.from_letter(p) for p in letters)


def _genome_rank(genome) -> tuple:
    # deterministic tie-break order: R < I < B per gene
    return tuple(MODE_RANK[m] for m in genome)


def dropout_count(genome) -> int:
    """Hardware proxy: one dropout per masked part, so Both counts twice."""
    genome = _coerce_genome(genome)
    return sum(2 if m is PartMode.BOTH else 1 for m in genome)


class MemoizedEvaluator:
    """Wraps a genome -> (accuracy, ece) function with an insert-once cache."""

    def __init__(self, fn):
        self._fn = fn
        self._cache = {}
        self._lock = threading.Lock()
        self.calls = 0  # underlying evaluator invocations, not lookups

    def __call__(self, genome):
        genome = _coerce_genome(genome)
        with self._lock:
            if genome in self._cache:
                return self._cache[genome]
        try:
            result = self._fn(genome)
        except Exception as exc:
            raise EvaluationError(
                f"evaluator failed for {genome_to_string(genome)}: {exc}",
                genome=genome) from exc
        acc, ece_value = float(result[0]), float(result[1])
        with self._lock:
            if genome not in self._cache:
                self._cache[genome] = (acc, ece_value)
                self.calls += 1
        return self._cache[genome]


def make_table_evaluator(table):
    """Evaluator backed by a {genome: (accuracy, ece)} mapping; strings accepted as keys."""
    normalized = {}
    for key, value in table.items():
        genome = genome_from_string(key) if isinstance(key, str) else _coerce_genome(key)
        normalized[genome] = (float(value[0]), float(value[1]))

    def lookup(genome):
        try:
            return normalized[genome]
        except KeyError:
            raise KeyError(f"no table entry for {genome_to_string(genome)}") from None

    return lookup


def evaluate(genome, evaluator, objective=MAX_ACC, constraint=None) -> FitnessRecord:
    """Score one genome; feasibility comes from the dropout-count constraint."""
    genome = _coerce_genome(genome)
    acc, ece_value = evaluator(genome)
    count = dropout_count(genome)
    feasible = constraint.allows(count) if constraint is not None else True
    return FitnessRecord(genome, acc, ece_value, count,
                         objective.fitness(acc, ece_value), feasible)


def select(records, k) -> list:
    """Top-k feasible records by fitness; ties broken by genome order (R < I < B)."""
    feasible = [r for r in records if r.feasible]
    if not feasible:
        raise SearchInfeasible("no feasible genome in the population; "
                               "relax the dropout-count constraint")
    feasible.sort(key=lambda r: (-r.fitness, _genome_rank(r.genome)))
    return feasible[:k]


def mutate(genome, prob, rng) -> tuple:
    """Resample each gene to one of the other two modes with probability prob."""
    if not 0.0 <= prob <= 1.0:
        raise ConfigError(f"mutation prob must be in [0, 1], got {prob}")
    out = []
    for mode in genome:
        if rng.random() < prob:
            others = [m for m in MODE_ORDER if m is not mode]
            out.append(others[int(rng.integers(2))])
        else:
            out.append(mode)
    return tuple(out)


def crossover(a, b, rng) -> tuple:
    """Uniform layer-wise mixture: each gene comes from either parent with probability 0.5."""
    if len(a) != len(b):
        raise ConfigError(f"crossover parents differ in length: {len(a)} vs {len(b)}")
    take_a = rng.random(len(a)) < 0.5
    return tuple(x if t else y for x, y, t in zip(a, b, take_a))


def random_genome(n, rng) -> tuple:
    return tuple(MODE_ORDER[int(i)] for i in rng.integers(0, 3, size=n))


@dataclass(frozen=True)
class SearchResult:
    best: FitnessRecord
    history: tuple  # (generation, FitnessRecord) per population member per generation
    pareto: tuple


def _slot_rng(seed, generation, slot):
    # offspring streams are functions of (seed, generation, slot) so breeding
    # order never changes results
    return np.random.default_rng(np.random.SeedSequence([seed, generation, slot]))


def _feasible_genome(n, constraint: Constraint):
    """Canonical genome honoring the count bounds, or None when none exists."""
    lo = n if constraint.min_dropout is None else max(n, constraint.min_dropout)
    if lo > 2 * n:
        return None
    if constraint.max_dropout is not None and lo > constraint.max_dropout:
        return None
    return (PartMode.BOTH,) * (lo - n) + (PartMode.REAL,) * (2 * n - lo)


def run_search(config: SearchConfig, evaluator, n) -> SearchResult:
    """Evolve part-mode genomes of length ``n``; returns best, history, Pareto set.

    Generation 0 is the uniformly random initial population; each of
    ``config.iterations`` rounds selects the feasible top half and
    refills with offspring (a ``mutation_portion`` share by mutation,
    the rest by crossover applied with ``crossover_prob``, falling back
    to cloning). The all-time best feasible record is what is returned,
    independent of population drift. Bit-reproducible for a fixed seed.
    """
    if n < 1:
        raise ConfigError("genome length must be >= 1")
    mem = evaluator if isinstance(evaluator, MemoizedEvaluator) else MemoizedEvaluator(evaluator)
    init_rng = np.random.default_rng(np.random.SeedSequence([config.seed]))
    population = [random_genome(n, init_rng) for _ in range(config.population_size)]
    if config.constraint is not None and not any(
            config.constraint.allows(dropout_count(g)) for g in population):
        seeded = _feasible_genome(n, config.constraint)
        if seeded is None:
            raise SearchInfeasible(
                f"the dropout-count constraint excludes every length-{n} genome")
        population[-1] = seeded  # keep one feasible member so selection can start
    history = []
    seen = {}
    best = None

    def run_generation(generation, genomes):
        nonlocal best
        records = []
        for g in genomes:
            record = evaluate(g, mem, config.objective, config.constraint)
            records.append(record)
            history.append((generation, record))
            if record.feasible and record.genome not in seen:
                seen[record.genome] = record
            if record.feasible and (best is None or record.fitness > best.fitness
                                    or (record.fitness == best.fitness
                                        and _genome_rank(record.genome) < _genome_rank(best.genome))):
                best = record
        return records

    for generation in range(config.iterations):
        records = run_generation(generation, population)
        parents = select(records, config.population_size // 2)
        n_offspring = config.population_size - len(parents)
        n_mutation = int(round(config.mutation_portion * n_offspring))
        offspring = []
        for slot in range(n_offspring):
            rng = _slot_rng(config.seed, generation + 1, slot)
            if slot < n_mutation:
                parent = parents[int(rng.integers(len(parents)))]
                offspring.append(mutate(parent.genome, config.mutation_prob, rng))
            else:
                pa = parents[int(rng.integers(len(parents)))]
                pb = parents[int(rng.integers(len(parents)))]
                if rng.random() < config.crossover_prob:
                    offspring.append(crossover(pa.genome, pb.genome, rng))
                else:
                    offspring.append(pa.genome)
        population = [r.genome for r in parents] + offspring
    final = run_generation(config.iterations, population)
    if best is None:
        select(final, 1)  # raises the uniform infeasibility diagnostic
    return SearchResult(best, tuple(history), tuple(pareto_front(list(seen.values()))))


def enumerate_all(n, evaluator, objective=MAX_ACC, constraint=None) -> list:
    """Evaluate all 3^n genomes in lexicographic order, ranked by fitness.

    The exhaustive oracle the evolutionary loop is tested against;
    guarded to n <= 10 because the space grows as 3^n.
    """
    if not 1 <= n <= 10:
        raise ConfigError(f"enumerate_all supports 1 <= n <= 10, got {n}")
    mem = evaluator if isinstance(evaluator, MemoizedEvaluator) else MemoizedEvaluator(evaluator)
    records = [evaluate(genome, mem, objective, constraint)
               for genome in itertools.product(MODE_ORDER, repeat=n)]
    records.sort(key=lambda r: (-r.fitness, _genome_rank(r.genome)))
    return records


def make_pipeline_evaluator(spec, train_dataset, eval_dataset, train_config,
                            samples=3, n_bins=15):
    """Genome evaluator that trains a fresh network and scores it held out.

    Each genome gets its own training and evaluation seeds derived from
    (train_config.seed, the genome's mode codes), so a genome's score
    never depends on evaluation order and repeated runs agree.
    """
    from .inference import evaluate_dataset
    from .train import train as train_network

    def evaluate_genome(genome):
        codes = [MODE_RANK[m] for m in genome]
        train_seed = int(np.random.SeedSequence(
            [train_config.seed, 2, *codes]).generate_state(1)[0])
        config = replace(train_config, seed=train_seed)
        candidate = apply_genome(spec, genome)
        weights, _ = train_network(candidate, train_dataset, config)
        eval_rng = np.random.default_rng(
            np.random.SeedSequence([train_config.seed, 3, *codes]))
        report, _ = evaluate_dataset(candidate, weights, eval_dataset,
                                     t=samples, rng=eval_rng, n_bins=n_bins)
        return report.accuracy, report.ece

    return evaluate_genome


def pareto_front(records) -> list:
    """Records not dominated under (accuracy higher-better, ece lower-better)."""
    unique = {}
    for r in records:
        if r.genome not in unique:
            unique[r.genome] = r
    items = list(unique.values())
    front = []
    for r in items:
        dominated = any(
            s.accuracy >= r.accuracy and s.ece <= r.ece
            and (s.accuracy > r.accuracy or s.ece < r.ece)
            for s in items)
        if not dominated:
            front.append(r)
    front.sort(key=lambda r: (-r.accuracy, r.ece, _genome_rank(r.genome)))
    return front
