import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walklab.errors import PathwiseInvariantError
from walklab.lattice import IncrementSequence, increments_for
from walklab.local_times import (
    accumulate,
    audit_counts,
    field_from_dict,
    field_to_csv,
    level_set,
    q_norm,
    range_size,
    read_field_csv,
    restricted_q_norm,
    truncated_q_norm,
    visit_counts,
)


def inc_of(codes, d=3):
    return IncrementSequence(d, np.array(codes, dtype=np.uint8))


def test_accumulate_single_step():
    f = accumulate(inc_of([4]))
    assert f.as_dict() == {(0, 0, 0): 1}


def test_accumulate_hand_trace():
    # +e1, -e1, +e2 counts S(0), S(1), S(2)
    f = accumulate(inc_of([0, 1, 2]))
    assert f.as_dict() == {(0, 0, 0): 2, (1, 0, 0): 1}


@given(seed=st.integers(0, 2**32), n=st.integers(1, 500), d=st.integers(1, 5))
@settings(max_examples=40, deadline=None)
def test_mass_property(seed, n, d):
    f = accumulate(increments_for(seed, 0, d, n))
    assert f.mass == n
    assert int(f.counts.sum()) == n
    assert np.array_equal(np.sort(f.counts), np.sort(visit_counts(increments_for(seed, 0, d, n))))


def test_q_norm_hand_trace():
    f = field_from_dict(3, {(0, 0, 0): 2, (1, 0, 0): 1})
    assert q_norm(f, 2) == 5
    assert isinstance(q_norm(f, 2), int)
    assert q_norm(f, 2.0) == 5  # integral float uses the exact path


def test_q_norm_mass_identity():
    f = accumulate(increments_for(7, 0, 3, 333))
    assert q_norm(f, 1) == 333


@given(seed=st.integers(0, 2**32), n=st.integers(1, 300), q=st.floats(1.0, 4.0))
@settings(max_examples=40, deadline=None)
def test_q_norm_bounds(seed, n, q):
    f = accumulate(increments_for(seed, 1, 3, n))
    val = q_norm(f, q)
    assert n - 1e-9 <= float(val) <= float(n) ** q * (1 + 1e-12)


def test_q_norm_exact_beyond_int64():
    f = field_from_dict(1, {(0,): 2**13, (1,): 3})
    val = q_norm(f, 5)
    assert val == (2**13) ** 5 + 3**5  # 2^65 + 243, exact wide integer
    assert isinstance(val, int)


def test_q_norm_non_integer_returns_float():
    f = field_from_dict(3, {(0, 0, 0): 2, (1, 0, 0): 1})
    v = q_norm(f, 1.5)
    assert isinstance(v, float)
    assert v == pytest.approx(2**1.5 + 1.0, rel=1e-15)


def test_q_norm_rejects_small_q():
    f = field_from_dict(3, {(0, 0, 0): 1})
    with pytest.raises(ValueError):
        q_norm(f, 0.5)


def test_truncated_inactive_when_M_large():
    f = accumulate(increments_for(3, 0, 3, 200))
    assert truncated_q_norm(f, 2, 200) == q_norm(f, 2)
    assert truncated_q_norm(f, 2, 10**9) == q_norm(f, 2)


def test_truncated_hand_trace():
    f = field_from_dict(3, {(0, 0, 0): 2, (1, 0, 0): 1})
    assert truncated_q_norm(f, 2, 1) == 1
    assert truncated_q_norm(f, 2, 0.5) == 0  # all counts >= 1


@given(seed=st.integers(0, 2**32), n=st.integers(1, 200))
@settings(max_examples=30, deadline=None)
def test_truncation_monotone(seed, n):
    f = accumulate(increments_for(seed, 2, 3, n))
    cuts = [1, 2, 4, n // 2 + 1, n]
    vals = [float(truncated_q_norm(f, 2, M)) for M in cuts]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == float(q_norm(f, 2))


def test_level_set_hand_trace():
    f = field_from_dict(3, {(0, 0, 0): 2, (1, 0, 0): 1})
    ls = level_set(f, 1, 2)
    assert {tuple(s) for s in ls.sites} == {(1, 0, 0)}
    assert len(level_set(f, 4, 5)) == 0


def test_level_set_partitions_support():
    f = accumulate(increments_for(11, 0, 3, 500))
    total = 0
    covered_mass = 0
    b = 1
    while b <= int(f.counts.max()):
        ls = level_set(f, b, 2 * b)
        total += len(ls)
        covered_mass += len(ls) * b
        assert covered_mass <= 2 * f.n  # loose pathwise consistency
        b *= 2
    assert total == range_size(f)


def test_level_set_validation():
    f = field_from_dict(3, {(0, 0, 0): 1})
    with pytest.raises(ValueError):
        level_set(f, 0.5, 2)
    with pytest.raises(ValueError):
        level_set(f, 3, 2)


def test_restricted_q_norm():
    f = field_from_dict(3, {(0, 0, 0): 2, (1, 0, 0): 1})
    assert restricted_q_norm(f, 2, lambda c: c > 0) == q_norm(f, 2)
    assert restricted_q_norm(f, 2, lambda c: c > 1) == 4


@given(seed=st.integers(0, 2**32), n=st.integers(1, 300), a=st.integers(1, 10))
@settings(max_examples=30, deadline=None)
def test_restricted_partition(seed, n, a):
    f = accumulate(increments_for(seed, 3, 3, n))
    high = restricted_q_norm(f, 2, lambda c: c > a)
    low = restricted_q_norm(f, 2, lambda c: c <= a)
    assert high + low == q_norm(f, 2)


def test_range_hand_traces():
    assert range_size(accumulate(inc_of([4]))) == 1
    assert range_size(accumulate(inc_of([0, 1, 2]))) == 2


@given(seed=st.integers(0, 2**32), n=st.integers(1, 400))
@settings(max_examples=30, deadline=None)
def test_holder_bound(seed, n):
    f = accumulate(increments_for(seed, 4, 3, n))
    r = range_size(f)
    assert 1 <= r <= n
    assert q_norm(f, 2) * r >= n**2  # exact integer Holder
    qf = q_norm(f, 2.5)
    assert qf >= n**2.5 / r**1.5 * (1 - 1e-12)


def test_field_csv_roundtrip(tmp_path):
    f = accumulate(increments_for(21, 0, 3, 150))
    path = tmp_path / "field.csv"
    field_to_csv(f, path)
    header = path.read_text().splitlines()[0]
    assert header == "x1,x2,x3,count"
    g = read_field_csv(path)
    assert g.as_dict() == f.as_dict()


def test_audit_detects_corruption():
    counts = visit_counts(increments_for(5, 0, 3, 100))
    audit_counts(counts, 100, 2.0)
    with pytest.raises(PathwiseInvariantError):
        audit_counts(counts, 101, 2.0)


def _oracle_vs_batch(n):
    """q-norms of all 6^n three-dimensional paths of length n.

    Oracle: with r_i = #{j : S(j) = S(i)} over i, j in [0, n), the
    pairwise-count identities q2 = sum_i r_i and q3 = sum_i r_i^2 are
    independent of any site bookkeeping.
    """
    P, d = 6**n, 3
    digits = np.arange(P, dtype=np.int64)
    codes = np.empty((P, n), dtype=np.uint8)
    for t in range(n):
        codes[:, t] = digits % 6
        digits //= 6
    axes = codes >> 1
    signs = (1 - 2 * (codes & 1)).astype(np.int8)
    pos = np.zeros((P, n, d), dtype=np.int8)
    for j in range(d):
        if n > 1:
            np.cumsum(np.where(axes == j, signs, 0)[:, :-1], axis=1, out=pos[:, 1:, j])
    r = np.zeros((P, n), dtype=np.int16)
    for i in range(n):
        for j in range(n):
            eq = np.ones(P, dtype=bool)
            for a in range(d):
                eq &= pos[:, i, a] == pos[:, j, a]
            r[:, i] += eq
    oracle_q2 = r.astype(np.int64).sum(axis=1)
    oracle_q3 = (r.astype(np.int64) ** 2).sum(axis=1)

    # batch evaluation of the production formula: packed unique counts
    key = (pos[:, :, 0].astype(np.int64) + 8) + 17 * (pos[:, :, 1].astype(np.int64) + 8) + 289 * (
        pos[:, :, 2].astype(np.int64) + 8
    )
    gkey = (np.arange(P, dtype=np.int64)[:, None] * 4913 + key).ravel()
    uniq, counts = np.unique(gkey, return_counts=True)
    owner = uniq // 4913
    got_q2 = np.bincount(owner, weights=counts.astype(np.float64) ** 2, minlength=P).astype(np.int64)
    got_q3 = np.bincount(owner, weights=counts.astype(np.float64) ** 3, minlength=P).astype(np.int64)
    assert np.array_equal(got_q2, oracle_q2)
    assert np.array_equal(got_q3, oracle_q3)
    return codes, oracle_q2, oracle_q3


def test_brute_force_oracle_exhaustive():
    for n in range(1, 8):
        _oracle_vs_batch(n)
    codes, oracle_q2, oracle_q3 = _oracle_vs_batch(8)
    # tie a sample of paths to the public accumulate/q_norm implementation
    rng = np.random.default_rng(0)
    for p in rng.choice(6**8, size=300, replace=False):
        f = accumulate(IncrementSequence(3, codes[p]))
        assert q_norm(f, 2) == int(oracle_q2[p])
        assert q_norm(f, 3) == int(oracle_q3[p])
        assert f.mass == 8
