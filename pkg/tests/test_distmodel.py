import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assocmem.distmodel import (
    POPULATION,
    AliasTable,
    CovarianceSpec,
    make_rng,
    population_weights,
    power_law_dist,
    sample_embeddings,
    sample_minibatch,
)


@pytest.mark.parametrize(
    "n, alpha, expected",
    [
        (1, 2.0, [1.0]),
        (2, 1.0, [2 / 3, 1 / 3]),
        (3, 2.0, [36 / 49, 9 / 49, 4 / 49]),
    ],
)
def test_power_law_examples(n, alpha, expected):
    np.testing.assert_allclose(power_law_dist(n, alpha).probs, expected, rtol=1e-15)


@pytest.mark.parametrize("n, alpha", [(0, 1.0), (-3, 1.0), (5, 0.0), (5, -1.0)])
def test_power_law_rejects_bad_args(n, alpha):
    with pytest.raises(ValueError):
        power_law_dist(n, alpha)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5000), st.floats(0.1, 4.0))
def test_power_law_invariants(n, alpha):
    p = power_law_dist(n, alpha).probs
    assert abs(math.fsum(p) - 1.0) <= 1e-12
    assert np.all(p > 0)
    assert np.all(np.diff(p) < 0)
    i, j = 0, n - 1
    # ratio p_i / p_j = ((j+1)/(i+1))^alpha
    assert p[i] / p[j] == pytest.approx(((j + 1) / (i + 1)) ** alpha, rel=1e-12)


def test_covariance_spectra():
    iso = CovarianceSpec()
    np.testing.assert_array_equal(iso.eigenvalues(8), np.full(8, 1 / 8))
    flat = CovarianceSpec("power-law-diagonal", 0.0)
    np.testing.assert_array_equal(flat.scales(8), iso.scales(8))
    aniso = CovarianceSpec("power-law-diagonal", 1.5)
    lam = aniso.eigenvalues(16)
    assert lam.sum() == pytest.approx(1.0, abs=1e-14)
    assert lam[0] / lam[3] == pytest.approx(4**1.5)
    with pytest.raises(ValueError):
        CovarianceSpec("banded")


def test_embeddings_deterministic():
    a = sample_embeddings(8, 50, seed=123)
    b = sample_embeddings(8, 50, seed=123)
    assert a.U.tobytes() == b.U.tobytes()
    assert a.V.tobytes() == b.V.tobytes()
    c = sample_embeddings(8, 50, seed=124)
    assert not np.array_equal(a.U, c.U)


def test_embeddings_isotropic_norm():
    emb = sample_embeddings(64, 4096, seed=0)
    mean_sq = np.mean(np.sum(emb.U**2, axis=0))
    assert 0.97 <= mean_sq <= 1.03
    assert abs(mean_sq - 1) <= 5 / math.sqrt(64 * 4096)


def test_kappa_zero_matches_isotropic():
    a = sample_embeddings(16, 30, seed=5)
    b = sample_embeddings(16, 30, cov_u=CovarianceSpec("power-law-diagonal", 0.0),
                          cov_v=CovarianceSpec("power-law-diagonal", 0.0), seed=5)
    np.testing.assert_array_equal(a.U, b.U)
    np.testing.assert_array_equal(a.V, b.V)


def test_anisotropic_column_covariance():
    cov = CovarianceSpec("power-law-diagonal", 1.0)
    emb = sample_embeddings(6, 40000, cov_v=cov, seed=1)
    emp = np.mean(emb.V**2, axis=1)
    np.testing.assert_allclose(emp, cov.eigenvalues(6), rtol=0.05)


def test_minibatch_degenerate():
    mb = sample_minibatch(power_law_dist(1, 2.0), 10, seed=0)
    assert mb.count_map() == {0: 10}
    np.testing.assert_array_equal(mb.dense(), [1.0])


@pytest.mark.parametrize("seed", range(5))
def test_minibatch_single_draw(seed):
    mb = sample_minibatch(power_law_dist(50, 1.5), 1, seed=seed)
    q = mb.dense()
    assert np.count_nonzero(q) == 1 and q.max() == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 300), st.integers(1, 2000), st.integers(0, 2**63))
def test_minibatch_counts_sum_to_B(n, B, seed):
    mb = sample_minibatch(power_law_dist(n, 1.3), B, seed=seed)
    assert int(mb.counts.sum()) == B
    assert abs(math.fsum(mb.weights) - 1.0) <= 1e-12


def test_minibatch_matches_multinomial_moments():
    dist = power_law_dist(100, 1.5)
    B = 10**6
    q = sample_minibatch(dist, B, seed=42).dense()
    p = dist.probs
    mask = p >= 1e-4
    bound = 5 * np.sqrt(p * (1 - p) / B)
    assert np.all(np.abs(q - p)[mask] <= bound[mask])


def test_alias_table_reproduces_probs():
    probs = np.array([0.25, 0.4, 0.35])
    table = AliasTable(probs)
    # exact probability mass implied by the table
    mass = np.zeros(3)
    for col in range(3):
        mass[col] += table.prob[col] / 3
        mass[table.alias[col]] += (1 - table.prob[col]) / 3
    np.testing.assert_allclose(mass, probs, atol=1e-15)
    draws = table.draw(make_rng(0), 200000)
    np.testing.assert_allclose(np.bincount(draws) / 200000, probs, atol=0.005)


def test_population_weights():
    dist = power_law_dist(2, 1.0)
    w = population_weights(dist)
    assert w.is_population and w.batch_size is POPULATION
    np.testing.assert_allclose(w.dense(), [2 / 3, 1 / 3])
    assert math.fsum(w.weights) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        w.count_map()


def test_restrict_tail_mass():
    dist = power_law_dist(10, 1.0)
    w = population_weights(dist)
    head = w.restrict(stop=4)
    assert math.fsum(head.weights) + dist.tail_mass(4) == pytest.approx(1.0)
    tail = w.restrict(start=4)
    np.testing.assert_array_equal(tail.indices, np.arange(4, 10))
