import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walklab.analytic import dyadic_ladder
from walklab.decomposition import (
    build_strand_tree,
    elementary_inequality_check,
    intersection_term,
    quasi_dyadic_split,
    reconstruction_holds,
    sandwich_profile,
    split_strands,
    verify_sandwich,
    verify_truncated_sandwich,
)
from walklab.errors import CoverageError
from walklab.lattice import IncrementSequence, increments_for
from walklab.local_times import accumulate, field_from_dict, q_norm, truncated_q_norm


def inc_of(codes, d=3):
    return IncrementSequence(d, np.array(codes, dtype=np.uint8))


FOUR_STEP = inc_of([0, 1, 2, 3])  # +e1, -e1, +e2, -e2


# ------------------------------------------------------------ dyadic split


def test_quasi_dyadic_examples():
    assert quasi_dyadic_split(8, 3).parts.tolist() == [1] * 8
    assert quasi_dyadic_split(10, 2).parts.tolist() == [3, 2, 3, 2]
    assert quasi_dyadic_split(10, 1).parts.tolist() == [5, 5]


def test_quasi_dyadic_nesting():
    coarse = quasi_dyadic_split(10, 1).parts
    fine = quasi_dyadic_split(10, 2).parts
    assert coarse.tolist() == (fine[0::2] + fine[1::2]).tolist()


def test_quasi_dyadic_rejects_deep():
    with pytest.raises(ValueError):
        quasi_dyadic_split(7, 3)


@given(n=st.integers(1, 10**6), depth=st.integers(0, 10))
@settings(max_examples=80, deadline=None)
def test_quasi_dyadic_invariants(n, depth):
    if 2**depth > n:
        with pytest.raises(ValueError):
            quasi_dyadic_split(n, depth)
        return
    s = quasi_dyadic_split(n, depth)
    p = s.parts
    assert int(p.sum()) == n
    assert int(p.max()) - int(p.min()) <= 1
    assert n / 2**depth - 1 <= int(p.min()) and int(p.max()) <= n / 2**depth + 1
    if depth:
        coarse = quasi_dyadic_split(n, depth - 1).parts
        assert np.array_equal(coarse, p[0::2] + p[1::2])


# ------------------------------------------------------------ strands


def test_split_strands_hand_trace():
    s1, s2 = split_strands(FOUR_STEP, 2)
    assert s1.as_dict() == {(0, 0, 0): 1, (-1, 0, 0): 1}
    assert s2.as_dict() == {(0, 0, 0): 1, (0, -1, 0): 1}


def test_split_strands_masses():
    inc = increments_for(3, 0, 3, 100)
    s1, s2 = split_strands(inc, 37)
    assert s1.mass == 37 and s2.mass == 63


def test_split_strands_range_check():
    with pytest.raises(ValueError):
        split_strands(FOUR_STEP, 0)
    with pytest.raises(ValueError):
        split_strands(FOUR_STEP, 4)


@given(seed=st.integers(0, 2**32), n=st.integers(2, 200))
@settings(max_examples=50, deadline=None)
def test_reconstruction_random(seed, n):
    inc = increments_for(seed, 0, 3, n)
    n1 = 1 + seed % (n - 1)
    assert reconstruction_holds(inc, n1)


def test_tree_depth_zero_is_plain_field():
    inc = increments_for(5, 1, 3, 64)
    tree = build_strand_tree(inc, 0)
    assert tree.fields(0)[0].as_dict() == accumulate(inc).as_dict()


def test_tree_masses_and_windows():
    inc = increments_for(6, 2, 4, 173)
    tree = build_strand_tree(inc, 4)
    for j in range(5):
        fields = tree.fields(j)
        assert len(fields) == 2**j
        assert sum(f.mass for f in fields) == 173
        widths = [b - a for a, b, _ in tree.windows(j)]
        assert widths == quasi_dyadic_split(173, j).parts.tolist()


def test_tree_first_split_matches_split_strands():
    inc = increments_for(8, 0, 3, 101)
    tree = build_strand_tree(inc, 1)
    s1, s2 = split_strands(inc, quasi_dyadic_split(101, 1).parts[0])
    t1, t2 = tree.fields(1)
    assert t1.as_dict() == s1.as_dict()
    assert t2.as_dict() == s2.as_dict()


def test_tree_rejects_excess_depth():
    with pytest.raises(ValueError):
        build_strand_tree(increments_for(1, 0, 3, 7), 3)


# ------------------------------------------------------------ intersection term


def test_intersection_hand_trace():
    a = field_from_dict(3, {(0, 0, 0): 2, (1, 0, 0): 1})
    b = field_from_dict(3, {(0, 0, 0): 1, (0, 1, 0): 3})
    # shared site 0: max = 2 in [2, 4), so 2^q * b^(q-2) * 2 * 1 = 4 * 1 * 2 = 8
    assert intersection_term(a, b, dyadic_ladder(4), 2) == 8


def test_intersection_disjoint_supports():
    a = field_from_dict(3, {(0, 0, 0): 2})
    b = field_from_dict(3, {(5, 0, 0): 4})
    assert intersection_term(a, b, dyadic_ladder(8), 2) == 0


def test_intersection_exponent_zero_case():
    # q = 2 makes the ladder weight 1: the term is 4 * sum of products
    rng = np.random.default_rng(1)
    a = {(int(x), 0, 0): int(c) for x, c in zip(rng.integers(-3, 4, 6), rng.integers(1, 9, 6))}
    b = {(int(x), 0, 0): int(c) for x, c in zip(rng.integers(-3, 4, 6), rng.integers(1, 9, 6))}
    fa, fb = field_from_dict(3, a), field_from_dict(3, b)
    want = 4 * sum(a[z] * b[z] for z in set(a) & set(b))
    assert intersection_term(fa, fb, dyadic_ladder(16), 2) == want


def test_intersection_coverage_error():
    a = field_from_dict(3, {(0, 0, 0): 40})
    b = field_from_dict(3, {(0, 0, 0): 1})
    with pytest.raises(CoverageError):
        intersection_term(a, b, dyadic_ladder(8), 2)  # ladder tops out at 16 <= 40


# ------------------------------------------------------------ sandwich


def test_sandwich_hand_trace():
    rep = verify_sandwich(FOUR_STEP, 1, 2, dyadic_ladder(4))
    assert (rep.lower, rep.value, rep.upper) == (4, 6, 8)
    assert rep.terms == (4,)
    assert rep.mode == "exact"


def test_sandwich_depth_zero_degenerate():
    inc = increments_for(4, 0, 3, 50)
    rep = verify_sandwich(inc, 0, 2.5, dyadic_ladder(50))
    assert rep.lower == rep.value == rep.upper
    assert rep.terms == ()


@pytest.mark.parametrize("d", [3, 4, 5])
@pytest.mark.parametrize("q", [1.5, 2, 3])
def test_sandwich_random_paths(d, q):
    sub = dyadic_ladder(256)
    for i in range(25):
        inc = increments_for(777, i, d, 256)
        rep = verify_sandwich(inc, 4, q, sub, label=f"replica={i}")
        assert rep.holds()
        assert all(float(t) >= 0 for t in rep.terms)
        if q in (2, 3):
            assert rep.mode == "exact"


def test_sandwich_lower_bound_monotone_in_depth():
    inc = increments_for(12, 0, 3, 512)
    tree = build_strand_tree(inc, 6)
    reps = sandwich_profile(tree, 2.5, dyadic_ladder(512))
    lowers = [float(r.lower) for r in reps]
    assert all(a >= b - 1e-9 for a, b in zip(lowers, lowers[1:]))
    assert float(reps[0].lower) == float(reps[0].value)


def test_sandwich_json_fields():
    rep = verify_sandwich(FOUR_STEP, 1, 2, dyadic_ladder(4), label="seed=1")
    d = rep.to_json_dict()
    assert set(d) == {"q", "L", "lower", "value", "terms", "upper", "seed"}
    assert d["seed"] == "seed=1"


def test_truncated_matches_full_when_inactive():
    inc = increments_for(9, 0, 3, 128)
    sub = dyadic_ladder(128)
    full = verify_sandwich(inc, 3, 2, sub)
    trunc = verify_truncated_sandwich(inc, 3, 2, 128, sub)
    assert trunc.two_sided
    assert (trunc.lower, trunc.value, trunc.upper) == (full.lower, full.value, full.upper)


def test_truncated_cutoff_one():
    inc = increments_for(10, 0, 3, 200)
    f = accumulate(inc)
    rep = verify_truncated_sandwich(inc, 2, 2, 1, dyadic_ladder(1))
    assert rep.value == int(np.sum(f.counts == 1))
    assert rep.holds()


def test_truncated_lower_bound_can_exceed_value():
    # A site visited once in each half strand has truncated strand mass 2
    # but truncated walk contribution 0 at M=1: only the upper inequality
    # survives truncation, and the report says so.
    rep = verify_truncated_sandwich(FOUR_STEP, 1, 2, 1, dyadic_ladder(1))
    assert not rep.two_sided
    assert rep.lower > rep.value
    assert rep.holds()  # upper side


def test_truncated_random_sqrt_cutoff():
    for i in range(15):
        inc = increments_for(31, i, 3, 400)
        rep = verify_truncated_sandwich(inc, 4, 2.5, 20, dyadic_ladder(20))
        assert rep.holds()


def test_truncated_value_matches_truncated_q_norm():
    inc = increments_for(13, 0, 3, 300)
    rep = verify_truncated_sandwich(inc, 2, 2, 5, dyadic_ladder(5))
    assert rep.value == truncated_q_norm(accumulate(inc), 2, 5)


# ------------------------------------------------------------ elementary inequality


def test_elementary_hand_trace():
    # 25 <= 13 + 4*6 = 37 and 25 >= 13
    assert elementary_inequality_check(2, 3, 2, dyadic_ladder(4))


def test_elementary_zero_collapse():
    assert elementary_inequality_check(7, 0, 3, dyadic_ladder(8))
    assert elementary_inequality_check(0, 0, 2.5, dyadic_ladder(2))


def test_elementary_small_grid():
    sub = dyadic_ladder(32)
    for q in (1.1, 1.5, 2, 3, 4):
        for l1 in range(17):
            for l2 in range(17):
                assert elementary_inequality_check(l1, l2, q, sub)


def test_elementary_coverage_error():
    with pytest.raises(CoverageError):
        elementary_inequality_check(100, 1, 2, dyadic_ladder(8))


def test_sandwich_value_is_q_norm():
    inc = increments_for(77, 5, 4, 300)
    rep = verify_sandwich(inc, 3, 3, dyadic_ladder(300))
    assert rep.value == q_norm(accumulate(inc), 3)
