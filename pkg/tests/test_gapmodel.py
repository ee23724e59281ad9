import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import gamma

from bayesalign.domain import GapParams, Matching, MatchingError
from bayesalign.gapmodel import (
    LogNormalizerCache,
    MarginalGapPrior,
    build_grid,
    f_penalty,
    gap_counts,
    log_normalizer,
    log_partition_batch,
    marginal_log_prior,
    reduction,
    total_penalty,
)
from bayesalign.oracle import enumerate_matchings

GP = GapParams(4.0, 0.1)


def brute_penalty(pairs, m, n, gp):
    js = [0] + [j for j, _ in pairs] + [m + 1]
    ks = [0] + [k for _, k in pairs] + [n + 1]
    return sum(f_penalty(b - a, gp) for seq in (js, ks) for a, b in zip(seq, seq[1:]))


@st.composite
def matchings(draw, max_size=12):
    m = draw(st.integers(1, max_size))
    n = draw(st.integers(1, max_size))
    L = draw(st.integers(0, min(m, n)))
    js = sorted(draw(st.lists(st.integers(1, m), min_size=L, max_size=L, unique=True)))
    ks = sorted(draw(st.lists(st.integers(1, n), min_size=L, max_size=L, unique=True)))
    return Matching(tuple(zip(js, ks)), m, n)


@pytest.mark.parametrize("r, expected", [(1, 0.0), (2, 4.0), (5, 4.3)])
def test_f_penalty_values(r, expected):
    assert f_penalty(r, GP) == pytest.approx(expected)


def test_f_penalty_rejects_zero():
    with pytest.raises(ValueError):
        f_penalty(0, GP)


def test_single_internal_gap_of_length_three():
    # x residues 2..4 unmatched between two matches, y fully matched
    pb = total_penalty(Matching(((1, 1), (5, 2)), 5, 2), GP)
    assert (pb.s, pb.ext) == (1, 2)
    assert pb.u == pytest.approx(4.2)


def test_gaps_of_lengths_one_on_x_and_one_two_one_on_y():
    mt = Matching(((1, 1), (2, 3), (4, 4), (5, 7), (6, 9)), 6, 9)
    pb = total_penalty(mt, GP)
    assert (pb.s, pb.ext) == (4, 1)
    assert pb.u == pytest.approx(16.1)


def test_full_diagonal_has_no_penalty():
    assert total_penalty(Matching(tuple((i, i) for i in range(1, 6)), 5, 5), GP).u == 0.0


def test_total_penalty_rejects_invalid():
    with pytest.raises(MatchingError):
        total_penalty(Matching(((2, 2), (1, 1)), 3, 3), GP)


@pytest.mark.parametrize("args, expected", [((3, 2, 4), 4.0), ((3, 2, 6), 0.1), ((4, 2, 7), -3.8)])
def test_reduction_cases(args, expected):
    assert reduction(*args, GP) == pytest.approx(expected)


def test_reduction_rejects_outside_index():
    with pytest.raises(ValueError):
        reduction(5, 2, 4, GP)


@given(matchings(), st.floats(0, 10), st.floats(0, 3))
def test_counts_agree_with_piecewise_sum(mt, g, h):
    gp = GapParams(g, h)
    assert total_penalty(mt, gp).u == pytest.approx(brute_penalty(mt.pairs, mt.m, mt.n, gp), abs=1e-9)


@given(matchings())
def test_penalty_symmetric_under_transpose(mt):
    assert gap_counts(mt.pairs, mt.m, mt.n) == gap_counts(mt.transpose().pairs, mt.n, mt.m)


def insertion_points(mt):
    """Every legal (j, k) addition with its bounding neighbours on each side."""
    pairs = [(0, 0)] + list(mt.pairs) + [(mt.m + 1, mt.n + 1)]
    for (j0, k0), (j1, k1) in zip(pairs, pairs[1:]):
        for j in range(j0 + 1, j1):
            for k in range(k0 + 1, k1):
                yield j, k, (j0, j1), (k0, k1)


@given(matchings(), st.floats(0, 10), st.floats(0, 3))
@settings(max_examples=200)
def test_penalty_increment_identity(mt, g, h):
    gp = GapParams(g, h)
    before = gap_counts(mt.pairs, mt.m, mt.n)
    for j, k, (j0, j1), (k0, k1) in insertion_points(mt):
        after = gap_counts(sorted(mt.pairs + ((j, k),)), mt.m, mt.n)
        du = (g * before[0] + h * before[1]) - (g * after[0] + h * after[1])
        assert du == pytest.approx(reduction(j, j0, j1, gp) + reduction(k, k0, k1, gp), abs=1e-9)


def test_two_by_two_flat_normalizer():
    assert log_normalizer(2, 2, GapParams(0.0, 0.0)) == pytest.approx(-math.log(6))


def test_one_by_one_by_hand():
    g, h = 1.3, 0.4
    # empty: both sides one gap of length 1; {(1,1)}: no gaps
    assert log_normalizer(1, 1, GapParams(g, h)) == pytest.approx(-math.log(math.exp(-2 * g) + 1.0))


@pytest.mark.parametrize("m, n", [(4, 4), (3, 6), (6, 2)])
@pytest.mark.parametrize("g, h", [(4.0, 0.1), (0.0, 2.0), (0.7, 0.0)])
def test_normalizer_matches_enumeration(m, n, g, h):
    total = sum(math.exp(-(g * s + h * e)) for s, e in
                (gap_counts(mt.pairs, m, n) for mt in enumerate_matchings(m, n)))
    assert math.exp(-log_normalizer(m, n, GapParams(g, h))) == pytest.approx(total, rel=1e-12)


def test_normalizer_large_instance_finite_and_batched():
    gs = np.array([0.0, 4.0, 20.0])
    batch = log_partition_batch(226, 214, gs, 0.1)
    single = [log_partition_batch(226, 214, np.array([g]), 0.1)[0] for g in gs]
    assert np.all(np.isfinite(batch))
    assert np.allclose(batch, single, rtol=1e-13)


def test_normalizer_cache_is_stable():
    cache = LogNormalizerCache(5, 7)
    a = cache(1.5, 0.2)
    assert cache(1.5, 0.2) == a
    assert a == log_normalizer(5, 7, GapParams(1.5, 0.2))


def direct_marginal(m, n, s, ext, N, g_max, h_max, a_g, b_g, a_h, b_h):
    """Midpoint quadrature with one scalar normalizer call per node."""
    dg, dh = g_max / N, h_max / N
    total = 0.0
    for i in range(N):
        g = (i + 0.5) * dg
        for j in range(N):
            h = (j + 0.5) * dh
            log_z = log_normalizer(m, n, GapParams(g, h))
            prior = (b_g**a_g * g ** (a_g - 1) * math.exp(-b_g * g) / math.gamma(a_g)
                     * b_h**a_h * h ** (a_h - 1) * math.exp(-b_h * h) / math.gamma(a_h))
            total += math.exp(log_z - g * s - h * ext) * prior
    return math.log(total * dg * dh)


def test_marginal_prior_matches_direct_quadrature():
    grid = build_grid(3, 4, 6.0, 1.5, 10)
    hyper = (2.0, 0.5, 3.0, 2.0)
    for s, ext in [(0, 0), (1, 2), (3, 1)]:
        fast = marginal_log_prior(s, ext, grid, *hyper)
        assert fast == pytest.approx(direct_marginal(3, 4, s, ext, 10, 6.0, 1.5, *hyper), rel=1e-12)


def test_marginal_prior_sums_to_quadrature_of_hyperprior():
    # at every node the prior over M sums to one, so the total is the midpoint sum of the gamma densities
    m, n = 3, 3
    grid = build_grid(m, n, 40.0, 20.0, 200)
    prior = MarginalGapPrior(grid, 2.0, 1.0, 3.0, 2.0)
    total = sum(math.exp(prior(*gap_counts(mt.pairs, m, n))) for mt in enumerate_matchings(m, n))
    expected = (np.sum(gamma.pdf(grid.g_nodes, 2.0, scale=1.0)) * grid.dg
                * np.sum(gamma.pdf(grid.h_nodes, 3.0, scale=0.5)) * grid.dh)
    assert total == pytest.approx(expected, rel=1e-12)
    assert total == pytest.approx(1.0, abs=5e-3)


def test_marginal_prior_cache_and_finite_on_wide_grid():
    grid = build_grid(108, 151, 20.0, 2.0, 100)
    prior = MarginalGapPrior(grid, 2.0, 0.5, 2.0, 20.0)
    a = prior(16, 100)
    assert math.isfinite(a)
    assert prior(16, 100) == a
    with pytest.raises(ValueError):
        prior.check_shape(151, 108)


def test_marginal_prior_monotone_in_counts():
    prior = MarginalGapPrior(build_grid(10, 12, 20.0, 2.0, 30), 2.0, 0.5, 2.0, 20.0)
    table = np.array([[prior(s, e) for e in range(0, 12)] for s in range(0, 8)])
    assert np.all(np.diff(table, axis=0) <= 0)
    assert np.all(np.diff(table, axis=1) <= 0)


def test_marginal_prior_rejects_small_shapes():
    grid = build_grid(3, 3, 5.0, 1.0, 4)
    with pytest.raises(ValueError):
        MarginalGapPrior(grid, 0.5, 1.0, 2.0, 1.0)
