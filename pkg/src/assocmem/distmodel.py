"""Power-law item frequencies, Gaussian embeddings and minibatch sampling.

Items are indexed from 0 in frequency order, so item 0 is the most frequent
one (rank 1 in the usual Zipf convention).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class _Population(enum.Enum):
    POPULATION = "inf"

    def __repr__(self):
        return "POPULATION"

    def __str__(self):
        return "inf"


#: Sentinel batch size meaning "use the population distribution" (B = infinity).
POPULATION = _Population.POPULATION


def make_rng(seed, *tags) -> np.random.Generator:
    """Philox generator keyed by a 64-bit seed and optional integer tags.

    Distinct tag tuples give statistically independent streams, so e.g. the
    embeddings and the step-t minibatch of the same run never share draws.
    """
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(t) for t in tags))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class FrequencyDistribution:
    n_items: int
    alpha: float
    probs: np.ndarray = field(repr=False)

    @cached_property
    def alias_table(self) -> "AliasTable":
        return AliasTable(self.probs)

    def tail_mass(self, start: int) -> float:
        """Total probability of items ``start, start+1, ...``."""
        return math.fsum(self.probs[start:])


def power_law_dist(n_items: int, alpha: float) -> FrequencyDistribution:
    """p_i proportional to (i+1)^-alpha for i = 0..n_items-1."""
    if int(n_items) != n_items or n_items < 1:
        raise ValueError(f"n_items must be a positive integer, got {n_items!r}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    n_items = int(n_items)
    weights = np.arange(1, n_items + 1, dtype=np.float64) ** (-float(alpha))
    # fsum is exactly rounded, which keeps the normalization tight for N ~ 1e6
    probs = weights / math.fsum(weights)
    probs.setflags(write=False)
    return FrequencyDistribution(n_items, float(alpha), probs)


class AliasTable:
    """Vose alias table: O(N) setup, O(1) per draw."""

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=np.float64)
        n = len(probs)
        scaled = probs * (n / probs.sum())
        prob = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] -= 1.0 - scaled[s]
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to rounding
        self.prob = prob
        self.alias = alias
        self.n = n

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cols = rng.integers(0, self.n, size=size)
        coin = rng.random(size)
        return np.where(coin < self.prob[cols], cols, self.alias[cols])


@dataclass(frozen=True)
class CovarianceSpec:
    kind: str = "isotropic"
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in ("isotropic", "power-law-diagonal"):
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")

    def eigenvalues(self, dim: int) -> np.ndarray:
        """Trace-one diagonal spectrum; the isotropic case is (1/d) * ones."""
        if self.kind == "isotropic":
            return np.full(dim, 1.0 / dim)
        lam = np.arange(1, dim + 1, dtype=np.float64) ** (-self.kappa)
        return lam / lam.sum()

    def scales(self, dim: int) -> np.ndarray:
        return np.sqrt(self.eigenvalues(dim))

    def matrix(self, dim: int) -> np.ndarray:
        return np.diag(self.eigenvalues(dim))


ISOTROPIC = CovarianceSpec()


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Unembeddings ``U`` and embeddings ``V``, one column per item."""

    dim: int
    n_items: int
    unembeddings: np.ndarray = field(repr=False)
    embeddings: np.ndarray = field(repr=False)
    cov_u: CovarianceSpec = ISOTROPIC
    cov_v: CovarianceSpec = ISOTROPIC
    seed: int | None = None

    @property
    def U(self):
        return self.unembeddings

    @property
    def V(self):
        return self.embeddings

    @cached_property
    def u_mean(self) -> np.ndarray:
        return self.unembeddings.mean(axis=1)


def sample_embeddings(dim, n_items, cov_u=ISOTROPIC, cov_v=ISOTROPIC, seed=0) -> EmbeddingSet:
    if dim < 1 or n_items < 1:
        raise ValueError("dim and n_items must be >= 1")
    rng = make_rng(seed, 0)
    U = rng.standard_normal((dim, n_items)) * cov_u.scales(dim)[:, None]
    V = rng.standard_normal((dim, n_items)) * cov_v.scales(dim)[:, None]
    U.setflags(write=False)
    V.setflags(write=False)
    return EmbeddingSet(dim, n_items, U, V, cov_u, cov_v, seed)


def from_matrices(U, V, seed=None) -> EmbeddingSet:
    """Wrap explicit d x N matrices (e.g. orthonormal test fixtures)."""
    U = np.array(U, dtype=np.float64)
    V = np.array(V, dtype=np.float64)
    if U.shape != V.shape or U.ndim != 2:
        raise ValueError("U and V must both be d x N")
    return EmbeddingSet(U.shape[0], U.shape[1], U, V, seed=seed)


@dataclass(frozen=True, eq=False)
class MinibatchWeights:
    """Empirical item frequencies q, stored sparsely.

    ``indices`` lists items with q > 0 in increasing order; ``counts`` holds
    their occurrence counts (``None`` in population mode).
    """

    batch_size: int | _Population
    n_items: int
    indices: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    counts: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_population(self) -> bool:
        return self.batch_size is POPULATION

    def dense(self) -> np.ndarray:
        q = np.zeros(self.n_items)
        q[self.indices] = self.weights
        return q

    def count_map(self) -> dict[int, int]:
        if self.counts is None:
            raise ValueError("population weights carry no counts")
        return dict(zip(self.indices.tolist(), self.counts.tolist()))

    def restrict(self, stop: int | None = None, start: int = 0) -> "MinibatchWeights":
        """Weights of items in ``[start, stop)``; used for truncation and deflation."""
        lo = np.searchsorted(self.indices, start)
        hi = len(self.indices) if stop is None else np.searchsorted(self.indices, stop)
        return MinibatchWeights(
            self.batch_size,
            self.n_items,
            self.indices[lo:hi],
            self.weights[lo:hi],
            None if self.counts is None else self.counts[lo:hi],
        )


def sample_minibatch(dist: FrequencyDistribution, batch_size: int, seed=0, step: int = 0) -> MinibatchWeights:
    """Draw B i.i.d. items from ``dist`` (with replacement) and tabulate them."""
    if int(batch_size) != batch_size or batch_size < 1:
        raise ValueError(f"batch_size must be a positive integer, got {batch_size!r}")
    batch_size = int(batch_size)
    rng = make_rng(seed, 1, step)
    draws = dist.alias_table.draw(rng, batch_size)
    indices, counts = np.unique(draws, return_counts=True)
    return MinibatchWeights(batch_size, dist.n_items, indices, counts / batch_size, counts)


def population_weights(dist: FrequencyDistribution) -> MinibatchWeights:
    return MinibatchWeights(POPULATION, dist.n_items, np.arange(dist.n_items), np.asarray(dist.probs))


def draw_weights(dist, batch_size, seed=0, step=0) -> MinibatchWeights:
    if batch_size is POPULATION:
        return population_weights(dist)
    return sample_minibatch(dist, batch_size, seed, step)
