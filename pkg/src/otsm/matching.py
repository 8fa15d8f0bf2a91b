"""Particle-cloud matching: exact pairwise assignment, a genetic heuristic for
the multimarginal case, and a brute-force enumeration oracle.

Conventions: ``match_pair(a, b)`` returns a permutation ``perm`` pairing row n
of ``a`` with row ``perm[n]`` of ``b``.  A ``MatchedEnsemble`` stores clouds
already reordered so row n corresponds across all of them; the first cloud is
the identity reference.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyEnsemble, SizeMismatch, TooLarge
from .splat import ParticleCloud

LEX_REFINE_MAX_N = 20


@dataclass
class Assignment:
    permutation: np.ndarray
    cost: float

    def __post_init__(self):
        self.permutation = np.asarray(self.permutation, dtype=np.int64)
        n = len(self.permutation)
        if not np.array_equal(np.sort(self.permutation), np.arange(n)):
            raise ValueError("permutation must be a bijection on 0..N-1")


@dataclass
class MatchedEnsemble:
    """P clouds with consistent row orderings plus the applied permutations."""

    clouds: list[ParticleCloud]
    total_cost: float
    orderings: list[np.ndarray] = field(default_factory=list)   # P-1 entries

    @property
    def n_clouds(self) -> int:
        return len(self.clouds)

    @property
    def n_particles(self) -> int:
        return self.clouds[0].n_particles

    def recompute_cost(self) -> float:
        stacks = np.stack([c.centers for c in self.clouds])
        return ensemble_cost(stacks)


def _check_same_size(clouds):
    n = clouds[0].n_particles
    for c in clouds[1:]:
        if c.n_particles != n:
            raise SizeMismatch("all clouds must share the same particle count")
    return n


def pairwise_cost(a: ParticleCloud, b: ParticleCloud, perm) -> float:
    """Sum of squared distances pairing a[n] with b[perm[n]]."""
    _check_same_size([a, b])
    perm = perm.permutation if isinstance(perm, Assignment) else np.asarray(perm)
    d = a.centers - b.centers[perm]
    return float((d * d).sum())


def ensemble_cost(stacked: np.ndarray) -> float:
    """Aggregate pairwise cost over all cloud pairs for row-aligned clouds.

    Uses sum_{p<p'} |v_p - v_p'|^2 = P * sum_p |v_p|^2 - |sum_p v_p|^2 per
    row, which makes the evaluation O(P*N) instead of O(P^2*N).
    """
    p = stacked.shape[0]
    total_sq = float((stacked * stacked).sum())
    s = stacked.sum(axis=0)
    return p * total_sq - float((s * s).sum())


def _cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return (diff * diff).sum(axis=2)


def _lexicographic_refine(cost: np.ndarray, best: float) -> np.ndarray:
    """Smallest-lexicographic optimal permutation by incremental fixing."""
    n = cost.shape[0]
    perm = np.full(n, -1, dtype=np.int64)
    free_cols = list(range(n))
    fixed = 0.0
    atol = 1e-9 * max(1.0, abs(best))
    for i in range(n):
        for j in sorted(free_cols):
            rest_rows = np.arange(i + 1, n)
            rest_cols = [c for c in free_cols if c != j]
            if len(rest_rows):
                sub = cost[np.ix_(rest_rows, rest_cols)]
                ri, ci = linear_sum_assignment(sub)
                rest = float(sub[ri, ci].sum())
            else:
                rest = 0.0
            if fixed + cost[i, j] + rest <= best + atol:
                perm[i] = j
                fixed += cost[i, j]
                free_cols.remove(j)
                break
    return perm


def match_pair(a: ParticleCloud, b: ParticleCloud) -> Assignment:
    """Exact minimum-cost bijection under squared Euclidean cost.

    For small clouds (N <= 20) ties are broken toward the lexicographically
    smallest permutation; larger instances keep the solver's deterministic
    output.
    """
    _check_same_size([a, b])
    cost = _cost_matrix(a.centers, b.centers)
    rows, cols = linear_sum_assignment(cost)
    perm = np.asarray(cols, dtype=np.int64)
    best = float(cost[rows, cols].sum())
    if len(perm) <= LEX_REFINE_MAX_N:
        perm = _lexicographic_refine(cost, best)
        best = float(cost[np.arange(len(perm)), perm].sum())
    return Assignment(permutation=perm, cost=best)


def chained_orderings(clouds: list[ParticleCloud]) -> np.ndarray:
    """Warm-start orderings: exact pairwise matching chained 0->1->...->P-1.

    Returns shape (P-1, N); entry p-1 reorders cloud p onto the reference row
    order of cloud 0.
    """
    n = clouds[0].n_particles
    orderings = np.empty((len(clouds) - 1, n), dtype=np.int64)
    prev = clouds[0].centers
    for p in range(1, len(clouds)):
        cost = _cost_matrix(prev, clouds[p].centers)
        _, cols = linear_sum_assignment(cost)
        orderings[p - 1] = cols
        prev = clouds[p].centers[cols]
    return orderings


@dataclass
class MatchConfig:
    population: int = 64
    tournament: int = 3
    elitism: int = 2
    generations: int = 200
    abs_tol: float = 1e2        # paper-scale absolute cost-decrease threshold
    rel_tol: float = 1e-4       # relative to initial best cost
    expected_swaps: float = 2.0


def _order_crossover(pa: np.ndarray, pb: np.ndarray, rng) -> np.ndarray:
    n = len(pa)
    i, j = np.sort(rng.integers(0, n, size=2))
    j += 1
    child = np.empty(n, dtype=np.int64)
    child[i:j] = pa[i:j]
    rest = pb[~np.isin(pb, pa[i:j])]
    child[:i] = rest[:i]
    child[j:] = rest[i:]
    return child


def _mutate(perm: np.ndarray, rng, expected_swaps: float) -> None:
    n = len(perm)
    k = rng.binomial(n, min(1.0, expected_swaps / n))
    for _ in range(k):
        i, j = rng.integers(0, n, size=2)
        perm[i], perm[j] = perm[j], perm[i]


def _genome_cost(genome: np.ndarray, centers: list[np.ndarray]) -> float:
    p = len(centers)
    stacked = np.empty((p,) + centers[0].shape)
    stacked[0] = centers[0]
    for q in range(1, p):
        stacked[q] = centers[q][genome[q - 1]]
    return ensemble_cost(stacked)


def _refine_orderings(genome: np.ndarray, centers: list[np.ndarray],
                      max_sweeps: int = 20) -> np.ndarray:
    """Block-coordinate descent: reorder each cloud exactly against the rest.

    With all other clouds fixed, the optimal reordering of cloud q is a plain
    assignment problem (cost row n, candidate j: (P-1)|c_j|^2 - 2 c_j . S_n
    where S_n sums the other clouds' row-n centers), so each sweep is exact
    and the total cost is non-increasing.
    """
    p = len(centers)
    genome = genome.copy()
    stacked = np.empty((p,) + centers[0].shape)
    stacked[0] = centers[0]
    for q in range(1, p):
        stacked[q] = centers[q][genome[q - 1]]
    cost = ensemble_cost(stacked)
    for _ in range(max_sweeps):
        improved = False
        for q in range(1, p):
            others = stacked.sum(axis=0) - stacked[q]
            c = centers[q]
            lap = (p - 1) * (c * c).sum(axis=1)[None, :] - 2.0 * others @ c.T
            _, cols = linear_sum_assignment(lap)
            new_stacked = stacked.copy()
            new_stacked[q] = c[cols]
            new_cost = ensemble_cost(new_stacked)
            if new_cost < cost - 1e-12:
                genome[q - 1] = cols
                stacked = new_stacked
                cost = new_cost
                improved = True
        if not improved:
            break
    return genome


def match_multi(clouds: list[ParticleCloud], config: MatchConfig | None = None,
                seed: int = 0) -> MatchedEnsemble:
    """Heuristic multimarginal matching (genetic algorithm over orderings).

    P=2 delegates to the exact pairwise solver.  The initial population is
    seeded with the chained-pairwise solution; evolution stops once the best
    cost decrease per generation falls below the absolute threshold or the
    relative one, whichever triggers first.
    """
    if len(clouds) < 2:
        raise EmptyEnsemble("need at least two clouds")
    n = _check_same_size(clouds)
    config = config or MatchConfig()

    if len(clouds) == 2:
        assign = match_pair(clouds[0], clouds[1])
        matched = [clouds[0], clouds[1].permuted(assign.permutation)]
        return MatchedEnsemble(clouds=matched, total_cost=assign.cost,
                               orderings=[assign.permutation])

    centers = [c.centers for c in clouds]
    p = len(clouds)
    rng = np.random.default_rng(seed)

    warm = chained_orderings(clouds)
    population = [warm]
    while len(population) < config.population:
        if len(population) <= config.population // 2:
            mutant = warm.copy()
            for row in mutant:
                _mutate(row, rng, config.expected_swaps)
            population.append(mutant)
        else:
            population.append(np.stack([rng.permutation(n) for _ in range(p - 1)]))
    costs = np.array([_genome_cost(g, centers) for g in population])

    best_idx = int(costs.argmin())
    best_cost = float(costs[best_idx])
    initial_cost = best_cost if best_cost > 0 else 1.0
    history = [best_cost]

    for _ in range(config.generations):
        order = np.argsort(costs)
        new_pop = [population[i].copy() for i in order[:config.elitism]]
        while len(new_pop) < config.population:
            parents = []
            for _ in range(2):
                contenders = rng.integers(0, config.population, size=config.tournament)
                parents.append(population[contenders[np.argmin(costs[contenders])]])
            child = np.stack([
                _order_crossover(parents[0][q], parents[1][q], rng)
                for q in range(p - 1)
            ])
            for row in child:
                _mutate(row, rng, config.expected_swaps)
            new_pop.append(child)
        population = new_pop
        costs = np.array([_genome_cost(g, centers) for g in population])
        gen_best = float(costs.min())
        decrease = history[-1] - gen_best
        if gen_best < history[-1]:
            history.append(gen_best)
        else:
            history.append(history[-1])
        if decrease < config.abs_tol or decrease < config.rel_tol * initial_cost:
            break

    # polish the elite genomes (and the warm start) with exact block-coordinate
    # sweeps, keeping whichever lands lowest
    elites = [population[i] for i in np.argsort(costs)[:config.elitism]]
    candidates = elites + [warm]
    if n <= 30:
        # tiny instances have few block-coordinate basins; cheap random
        # restarts escape the ones the GA population collapsed into
        candidates += [np.stack([rng.permutation(n) for _ in range(p - 1)])
                       for _ in range(30)]
    best = None
    best_refined_cost = np.inf
    for genome in candidates:
        refined = _refine_orderings(genome, centers)
        cost = _genome_cost(refined, centers)
        if cost < best_refined_cost:
            best = refined
            best_refined_cost = cost
    matched = [clouds[0]]
    for q in range(1, p):
        matched.append(clouds[q].permuted(best[q - 1]))
    ensemble = MatchedEnsemble(
        clouds=matched,
        total_cost=ensemble_cost(np.stack([c.centers for c in matched])),
        orderings=[best[q - 1].copy() for q in range(1, p)],
    )
    return ensemble


def brute_force_match(clouds: list[ParticleCloud]) -> MatchedEnsemble:
    """Globally optimal ensemble by exhaustive enumeration (test oracle)."""
    if len(clouds) < 2:
        raise EmptyEnsemble("need at least two clouds")
    n = _check_same_size(clouds)
    p = len(clouds)
    n_assignments = math.factorial(n) ** (p - 1)
    if n_assignments > 10 ** 7:
        raise TooLarge(f"{n_assignments} assignments exceed the enumeration guard")

    centers = [c.centers for c in clouds]
    best_cost = np.inf
    best_perms = None
    for combo in itertools.product(itertools.permutations(range(n)), repeat=p - 1):
        stacked = np.stack([centers[0]] + [
            centers[q + 1][np.asarray(combo[q])] for q in range(p - 1)
        ])
        cost = ensemble_cost(stacked)
        if cost < best_cost - 1e-15:
            best_cost = cost
            best_perms = [np.asarray(c, dtype=np.int64) for c in combo]
    matched = [clouds[0]] + [clouds[q + 1].permuted(best_perms[q]) for q in range(p - 1)]
    return MatchedEnsemble(clouds=matched, total_cost=float(best_cost),
                           orderings=best_perms)
