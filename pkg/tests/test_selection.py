import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsdpa.errors import WsdpaError
from wsdpa.selection import (
    PivotOrder,
    SelectionConfig,
    condition_number,
    rrqr_order,
    scale_rows,
    select_coefficients,
)


def _kappa(mat):
    s = np.linalg.svd(mat, compute_uv=False)
    return s[0] / s[-1]


# scale_rows

def test_scale_rows_hand_example():
    # alpha = mean of all entries = 1.5; row sums S = 2 and 4; multiplier alpha / S
    scaled, rec = scale_rows([np.array([[1.0, 1.0]]), np.array([[2.0, 2.0]])])
    assert rec.alpha == pytest.approx(1.5)
    np.testing.assert_allclose(rec.multipliers(0), [0.75])
    np.testing.assert_allclose(rec.multipliers(1), [0.375])
    np.testing.assert_allclose(scaled[0], [[0.75, 0.75]])
    np.testing.assert_allclose(scaled[1], [[0.75, 0.75]])
    # both images end up identical, with coefficient sums equal to alpha
    np.testing.assert_array_equal(scaled[0], scaled[1])


def test_scale_rows_equal_sums_unchanged(rng):
    a = rng.random((5, 6))
    a /= a.sum(axis=1, keepdims=True)
    b = rng.random((4, 6))
    b /= b.sum(axis=1, keepdims=True)
    a *= 6.0  # every row sums to 6 = alpha * width, alpha = 1
    b *= 6.0
    scaled, rec = scale_rows([a, b])
    assert rec.alpha == pytest.approx(1.0)
    for s, raw in zip(scaled, (a, b)):
        np.testing.assert_allclose(s * 6.0, raw, rtol=1e-12)
        np.testing.assert_allclose(s.sum(axis=1), rec.alpha, rtol=1e-12)


def test_scale_rows_zero_sum_names_row():
    with pytest.raises(WsdpaError, match="class 1, row 2"):
        scale_rows([np.ones((2, 3)), np.array([[1.0, 2, 3], [1, 1, 1], [1, -1, 0]])])


@given(seed=st.integers(0, 2**32 - 1), c=st.integers(1, 4), width=st.integers(1, 30))
@settings(max_examples=40, deadline=None)
def test_scale_rows_invariant(seed, c, width):
    rng = np.random.default_rng(seed)
    stacks = [rng.uniform(0.1, 2.0, size=(rng.integers(1, 8), width)) for _ in range(c)]
    scaled, rec = scale_rows(stacks)
    for s, raw, sums in zip(scaled, stacks, rec.row_sums):
        assert np.max(np.abs(s.sum(axis=1) - rec.alpha)) / rec.alpha < 1e-9
        np.testing.assert_allclose(s * (sums / rec.alpha)[:, None], raw, rtol=1e-12)


# rrqr_order

def test_rrqr_identity():
    order = rrqr_order(np.eye(3))
    np.testing.assert_allclose(order.rdiag, [1, 1, 1])
    np.testing.assert_array_equal(order.perm, [0, 1, 2])


def test_rrqr_duplicate_column_last(rng):
    a = rng.normal(size=(4, 3))
    a[:, 2] = a[:, 0]
    order = rrqr_order(a)
    assert order.perm[-1] in (0, 2)
    assert order.rdiag[2] < 1e-12
    # oracle: the two leading columns are the only well conditioned pair among all orderings' prefixes
    lead = a[:, order.perm[:2]]
    assert np.linalg.svd(lead, compute_uv=False)[-1] > 1e-8
    for cols in itertools.combinations(range(3), 3):
        assert np.linalg.svd(a[:, cols], compute_uv=False)[-1] < 1e-12


def test_rrqr_duplicate_tie_goes_to_lower_index(rng):
    a = rng.normal(size=(4, 3))
    a[:, 2] = a[:, 0]
    a[:, 1] *= 1e-3  # make the duplicated pair the largest
    order = rrqr_order(a)
    assert order.perm.tolist() == [0, 1, 2]


def test_rrqr_random_structure(rng):
    order = rrqr_order(rng.normal(size=(50, 10)))
    assert sorted(order.perm.tolist()) == list(range(10))
    assert np.all(np.diff(order.rdiag) <= 1e-12)


@pytest.mark.parametrize("shape,r", [((40, 12), 5), ((8, 20), 3), ((30, 30), 1)])
def test_rrqr_numerical_rank(rng, shape, r):
    a = rng.normal(size=(shape[0], r)) @ rng.normal(size=(r, shape[1]))
    d = rrqr_order(a).rdiag
    assert np.all(d[r:] < 1e-10 * d[0])
    assert d[r - 1] > 1e-6 * d[0]


def test_rrqr_matches_lapack_pivots(rng):
    import scipy.linalg

    a = rng.normal(size=(60, 25))
    _, r, p = scipy.linalg.qr(a, pivoting=True)
    order = rrqr_order(a)
    np.testing.assert_array_equal(order.perm, p)
    np.testing.assert_allclose(order.rdiag, np.abs(np.diag(r)), rtol=1e-10)


def test_rrqr_deterministic(rng):
    a = rng.normal(size=(30, 15))
    o1, o2 = rrqr_order(a), rrqr_order(a.copy())
    assert o1.perm.tobytes() == o2.perm.tobytes()
    assert o1.rdiag.tobytes() == o2.rdiag.tobytes()


def test_rrqr_equal_norm_ties_lowest_index():
    assert rrqr_order(np.eye(4)[:, [3, 1, 0, 2]]).perm.tolist() == [0, 1, 2, 3]
    assert rrqr_order(np.ones((3, 4))).perm[0] == 0


def test_rrqr_rejects_empty():
    with pytest.raises(WsdpaError):
        rrqr_order(np.zeros((0, 3)))
    with pytest.raises(WsdpaError):
        rrqr_order(np.zeros(4))


# condition_number

def test_condition_number_examples(rng):
    assert condition_number(np.eye(4)) == pytest.approx(1.0)
    assert condition_number(np.diag([4.0, 2.0])) == pytest.approx(2.0)
    m = rng.normal(size=(6, 3))
    s = np.linalg.svd(m, compute_uv=False)
    assert condition_number(m) == pytest.approx(s[0] / s[-1], rel=1e-9)
    assert condition_number(np.array([[1.0, 0.0], [0.0, 0.0]])) == float("inf")
    with pytest.raises(WsdpaError):
        condition_number(np.zeros((3, 3)))


# select_coefficients

def _orth(rng, n, m):
    return np.linalg.qr(rng.normal(size=(n, m)))[0]


def test_select_orthonormal_columns(rng):
    stacks = [_orth(rng, 12, 6), _orth(rng, 9, 6)]
    t = select_coefficients(stacks, rrqr_order(np.vstack(stacks)), SelectionConfig(tau=10))
    assert t.m == 6
    stacks = [_orth(rng, 12, 8), _orth(rng, 5, 8)[:, :5] @ np.eye(5, 8)]
    t = select_coefficients(stacks, rrqr_order(np.vstack(stacks)), SelectionConfig(tau=10))
    assert t.m <= 5


def _dependent_stacks(rng, w):
    out = []
    for n in (20, 15):
        b = rng.normal(size=(n, 4))
        out.append(np.hstack([b, b @ w[:, None]]))
    return out


def test_select_excludes_dependent_column(rng):
    w = rng.uniform(0.05, 0.1, size=4)  # small enough that B w is never the largest residual
    stacks = _dependent_stacks(rng, w)
    order = rrqr_order(np.vstack(stacks))
    assert order.perm[-1] == 4
    t = select_coefficients(stacks, order, SelectionConfig(tau=1e6))
    assert t.m == 4
    assert 4 not in t.perm[: t.m]
    for d in t.stacks:
        assert _kappa(d) <= 1e6
    # SVD oracle over every prefix of the pivot order
    for d in stacks:
        kap = [_kappa(d[:, order.perm[:g]]) for g in range(1, 6)]
        assert max(kap[:4]) <= 1e6 < kap[4]


def test_select_m_override(rng):
    stacks = [rng.normal(size=(10, 5)), rng.normal(size=(10, 5))]
    order = rrqr_order(np.vstack(stacks))
    t = select_coefficients(stacks, order, SelectionConfig(m_override=3))
    assert t.m == 3
    for d, s in zip(t.stacks, stacks):
        assert d.shape == (10, 3)
        np.testing.assert_array_equal(d, s[:, order.perm[:3]])


def test_select_m_override_infeasible(rng):
    stacks = [rng.normal(size=(10, 5)), rng.normal(size=(4, 5))]
    order = rrqr_order(np.vstack(stacks))
    with pytest.raises(WsdpaError, match="class 1 has 4 images"):
        select_coefficients(stacks, order, SelectionConfig(m_override=5))
    dep = _dependent_stacks(rng, rng.uniform(0.05, 0.1, size=4))
    with pytest.raises(WsdpaError, match="exceeds tau"):
        select_coefficients(dep, rrqr_order(np.vstack(dep)), SelectionConfig(m_override=5))


def test_select_gamma_one_failure():
    a = np.array([[10.0, 1.0], [10.0, 2.0], [10.0, 0.5]])
    b = np.array([[0.0, 1.0], [0.0, 3.0], [0.0, 1.0]])
    order = rrqr_order(np.vstack([a, b]))
    assert order.perm[0] == 0
    with pytest.raises(WsdpaError, match="class 1: even one coefficient"):
        select_coefficients([a, b], order, SelectionConfig())


def test_select_warns_when_samples_fewer_than_features(rng):
    stacks = [rng.normal(size=(3, 10)), rng.normal(size=(4, 10))]
    with pytest.warns(UserWarning, match="Samples are fewer than features."):
        t = select_coefficients(stacks, rrqr_order(np.vstack(stacks)), SelectionConfig())
    assert t.m <= 3


def test_select_records_perm(rng):
    stacks = [rng.normal(size=(10, 6)), rng.normal(size=(8, 6))]
    order = rrqr_order(np.vstack(stacks))
    t = select_coefficients(stacks, order, SelectionConfig(), class_names=["a", "b"])
    assert t.perm is order.perm
    for d, s in zip(t.stacks, stacks):
        np.testing.assert_array_equal(d, s[:, t.perm[: t.m]])
    assert t.class_names == ["a", "b"]


def test_select_needs_two_classes(rng):
    with pytest.raises(WsdpaError):
        select_coefficients([rng.normal(size=(4, 3))], PivotOrder(np.arange(3), np.ones(3)), SelectionConfig())


def test_config_validation():
    with pytest.raises(WsdpaError):
        SelectionConfig(tau=1.0)
    with pytest.raises(WsdpaError):
        SelectionConfig(m_override=0)


@given(seed=st.integers(0, 2**32 - 1), tau=st.sampled_from([3.0, 10.0, 1e2, 1e4]), n=st.integers(3, 20),
       width=st.integers(2, 12))
@settings(max_examples=40, deadline=None)
def test_selection_guarantee(seed, tau, n, width):
    rng = np.random.default_rng(seed)
    # mildly ill-conditioned stacks so tau binds for small caps
    scales = np.logspace(0, -3, width)
    stacks = [rng.normal(size=(n + k, width)) * scales for k in range(2)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        order = rrqr_order(np.vstack(stacks))
        t = select_coefficients(stacks, order, SelectionConfig(tau=tau))
    assert 1 <= t.m <= min(n, width)
    for d in t.stacks:
        s = np.linalg.svd(d, compute_uv=False)
        assert s[-1] > 0 and s[0] / s[-1] <= tau
    # maximality: one more column breaks tau for some class (or hits the size cap)
    if t.m < min(n, width):
        assert max(_kappa(s[:, order.perm[: t.m + 1]]) for s in stacks) > tau
