"""Pruning strategies, reduction accounting, aggregate error bookkeeping."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsemips import (
    ListLength,
    MassRatio,
    SparseDataset,
    VectorNumber,
    alpha_mass_subvector,
    apply_strategy,
    computation_reduction,
    inner_product_error,
    prune_list,
    prune_mass_ratio,
    prune_vector_number,
    sparse_dot,
)
from sparsemips.pruning import strategy_from_dict, strategy_to_dict

import helpers

# Three vectors over dims {1, 2, 3}; every strategy below keeps six of
# the nine postings, so their computation reductions coincide.
TRIO_ROWS = [
    {1: 0.9, 2: 0.6, 3: 0.3},
    {1: 2.0, 2: 1.2, 3: 0.4},
    {1: 1.9, 2: 0.5, 3: 2.2},
]


@pytest.fixture()
def trio():
    return SparseDataset.from_rows(TRIO_ROWS, d=4)


def random_dataset(rng, n, d, max_nnz, signed=False):
    rows = [
        helpers.random_sparse_dict(rng, d, max_nnz, signed=signed)
        for _ in range(n)
    ]
    return SparseDataset.from_rows(rows, d=d)


class TestMassRatio:
    def test_trio_at_alpha_point_seven(self, trio):
        got = helpers.rows_of(prune_mass_ratio(trio, 0.7))
        assert sorted(got[0]) == [1, 2]
        assert sorted(got[1]) == [1, 2]
        assert sorted(got[2]) == [1, 3]

    def test_rows_equal_alpha_mass_subvector(self):
        rng = np.random.default_rng(14)
        ds = random_dataset(rng, 40, 30, 10, signed=True)
        for alpha in (0.2, 0.5, 0.8, 0.95):
            pruned = prune_mass_ratio(ds, alpha)
            for i in range(ds.n):
                want = alpha_mass_subvector(ds.row(i), alpha)
                assert pruned.row(i) == want, (i, alpha)

    def test_alpha_one_is_identity(self, trio):
        assert prune_mass_ratio(trio, 1.0) is trio

    def test_alpha_grid_is_nested(self):
        rng = np.random.default_rng(15)
        ds = random_dataset(rng, 30, 25, 8)
        kept = []
        for alpha in (0.2, 0.4, 0.6, 0.8, 1.0):
            pruned = prune_mass_ratio(ds, alpha)
            kept.append({
                (i, j)
                for i in range(ds.n)
                for j in pruned.row(i).dims.tolist()
            })
        for small, big in zip(kept, kept[1:]):
            assert small <= big

    def test_invalid_alpha(self, trio):
        with pytest.raises(ValueError):
            prune_mass_ratio(trio, 0.0)


class TestVectorNumber:
    def test_trio_top_two(self, trio):
        got = helpers.rows_of(prune_vector_number(trio, 2))
        for i in range(3):
            assert got[i] == helpers.ref_prune_vn(
                helpers.as_dict(trio.row(i)), 2
            )
        assert sorted(got[2]) == [1, 3]

    def test_matches_reference(self):
        rng = np.random.default_rng(16)
        ds = random_dataset(rng, 35, 20, 9, signed=True)
        for vn in (1, 2, 4, 8):
            got = helpers.rows_of(prune_vector_number(ds, vn))
            for i in range(ds.n):
                assert got[i] == helpers.ref_prune_vn(
                    helpers.as_dict(ds.row(i)), vn
                ), (i, vn)

    def test_tie_prefers_lower_dim(self):
        ds = SparseDataset.from_rows([{2: 1.0, 5: -1.0, 7: 1.0}], d=8)
        got = helpers.rows_of(prune_vector_number(ds, 2))
        assert sorted(got[0]) == [2, 5]

    def test_large_vn_is_identity(self, trio):
        assert prune_vector_number(trio, 3) is trio

    def test_idempotent(self):
        rng = np.random.default_rng(17)
        ds = random_dataset(rng, 30, 15, 7, signed=True)
        once = prune_vector_number(ds, 3)
        twice = prune_vector_number(once, 3)
        assert twice == once


class TestListLength:
    def test_trio_cap_two(self, trio):
        got = helpers.rows_of(prune_list(trio, 2))
        want = helpers.ref_prune_list(TRIO_ROWS, 2)
        for g, w in zip(got, want):
            assert g == pytest.approx(w)
        assert sorted(got[0]) == [2]

    def test_matches_reference(self):
        rng = np.random.default_rng(17)
        ds = random_dataset(rng, 50, 15, 6, signed=True)
        for cap in (1, 3, 7):
            got = helpers.rows_of(prune_list(ds, cap))
            want = helpers.ref_prune_list(helpers.rows_of(ds), cap)
            for i in range(ds.n):
                assert got[i] == pytest.approx(want[i]), (i, cap)

    def test_tie_prefers_lower_id(self):
        ds = SparseDataset.from_rows([{0: 1.0}, {0: -1.0}, {0: 1.0}], d=1)
        got = helpers.rows_of(prune_list(ds, 2))
        assert got == [{0: 1.0}, {0: -1.0}, {}]

    def test_large_cap_is_identity(self, trio):
        assert prune_list(trio, 3) is trio


class TestStrategyPlumbing:
    def test_dispatch(self, trio):
        assert apply_strategy(trio, MassRatio(0.7)) == prune_mass_ratio(trio, 0.7)
        assert apply_strategy(trio, VectorNumber(2)) == prune_vector_number(trio, 2)
        assert apply_strategy(trio, ListLength(2)) == prune_list(trio, 2)

    def test_validation(self):
        with pytest.raises(ValueError):
            MassRatio(1.0001)
        with pytest.raises(ValueError):
            VectorNumber(0)
        with pytest.raises(ValueError):
            ListLength(0)
        with pytest.raises(TypeError):
            apply_strategy(SparseDataset.from_rows([], d=1), "mass")

    def test_dict_round_trip(self):
        for s in (MassRatio(0.4), VectorNumber(3), ListLength(9)):
            assert strategy_from_dict(strategy_to_dict(s)) == s


class TestComputationReduction:
    def test_trio_strategies_all_drop_three(self, trio):
        queries = SparseDataset.from_rows([{1: 1.0, 2: 1.0, 3: 1.0}], d=4)
        for strategy in (MassRatio(0.7), VectorNumber(2), ListLength(2)):
            pruned = apply_strategy(trio, strategy)
            got = computation_reduction(trio, pruned, queries, queries)
            assert got == pytest.approx(3.0, rel=1e-12), strategy

    def test_identity_reduction_is_zero(self, trio):
        queries = SparseDataset.from_rows([{1: 1.0}], d=4)
        assert computation_reduction(trio, trio, queries, queries) == 0.0

    def test_query_side_counts_too(self, trio):
        queries = SparseDataset.from_rows([{1: 1.0, 2: 1.0}], d=4)
        short = SparseDataset.from_rows([{1: 1.0}], d=4)
        got = computation_reduction(trio, trio, queries, short)
        assert got == pytest.approx(2 * 3.0 - 1 * 3.0)


class TestInnerProductError:
    def test_matches_per_document_reference(self):
        rng = np.random.default_rng(18)
        ds = random_dataset(rng, 30, 20, 8, signed=True)
        queries = random_dataset(rng, 6, 20, 6, signed=True)
        report = inner_product_error(
            ds, queries, MassRatio(0.6), MassRatio(0.5)
        )
        pruned = prune_mass_ratio(ds, 0.6)
        pruned_q = prune_mass_ratio(queries, 0.5)
        for qi in range(queries.n):
            want = helpers.ref_aggregate_error(
                helpers.rows_of(ds),
                helpers.rows_of(pruned),
                helpers.as_dict(queries.row(qi)),
                helpers.as_dict(pruned_q.row(qi)),
            )
            assert report.errors[qi] == pytest.approx(want, rel=1e-9, abs=1e-9)

    def test_reference_agreement_for_every_strategy_kind(self):
        rng = np.random.default_rng(19)
        ds = random_dataset(rng, 25, 15, 7)
        queries = random_dataset(rng, 5, 15, 5)
        for strategy in (MassRatio(0.5), VectorNumber(2), ListLength(3)):
            report = inner_product_error(ds, queries, strategy, MassRatio(0.7))
            pruned = apply_strategy(ds, strategy)
            pruned_q = prune_mass_ratio(queries, 0.7)
            for qi in range(queries.n):
                want = helpers.ref_aggregate_error(
                    helpers.rows_of(ds),
                    helpers.rows_of(pruned),
                    helpers.as_dict(queries.row(qi)),
                    helpers.as_dict(pruned_q.row(qi)),
                )
                assert report.errors[qi] == pytest.approx(
                    want, rel=1e-9, abs=1e-9
                ), strategy

    def test_no_pruning_no_error(self):
        rng = np.random.default_rng(20)
        ds = random_dataset(rng, 20, 12, 6, signed=True)
        queries = random_dataset(rng, 4, 12, 5, signed=True)
        report = inner_product_error(ds, queries, MassRatio(1.0), MassRatio(1.0))
        np.testing.assert_array_equal(report.errors, 0.0)
        assert report.mean_normalized == 0.0

    def test_nonnegative_error_monotone_in_alpha(self):
        rng = np.random.default_rng(21)
        ds = random_dataset(rng, 60, 25, 10)
        queries = random_dataset(rng, 8, 25, 8)
        means = [
            inner_product_error(
                ds, queries, MassRatio(a), MassRatio(a)
            ).mean_normalized
            for a in (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
        ]
        assert all(hi >= lo - 1e-12 for hi, lo in zip(means, means[1:]))
        assert means[-1] == 0.0
        for m in means:
            assert 0.0 <= m <= 1.0


class TestPrunedDatasetsStayValid:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_outputs_validate(self, seed):
        rng = np.random.default_rng(seed)
        ds = random_dataset(rng, int(rng.integers(1, 30)), 15, 8, signed=True)
        for strategy in (MassRatio(0.5), VectorNumber(2), ListLength(2)):
            pruned = apply_strategy(ds, strategy)
            pruned.validate()
            assert pruned.n == ds.n and pruned.d == ds.d
            # Pruning only removes entries, never alters surviving values.
            for i in range(ds.n):
                row = helpers.as_dict(ds.row(i))
                sub = helpers.as_dict(pruned.row(i))
                assert set(sub) <= set(row)
                assert all(row[j] == v for j, v in sub.items())
