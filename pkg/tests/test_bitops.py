"""Bitmask kernel checks against slow per-bit Python references."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fermisde import _sparse as sp


def test_words_for():
    assert sp.words_for(0) == 1
    assert sp.words_for(1) == 1
    assert sp.words_for(64) == 1
    assert sp.words_for(65) == 2
    assert sp.words_for(128) == 2
    assert sp.words_for(129) == 3


@given(st.integers(min_value=0, max_value=2**200 - 1))
def test_encode_decode_roundtrip(value):
    w = max(1, (value.bit_length() + 63) // 64)
    row = sp.encode_mask(value, w)
    assert sp.decode_mask(row) == value


@given(st.lists(st.integers(0, 2**130 - 1), min_size=1, max_size=20))
def test_popcount_matches_python(values):
    masks = np.stack([sp.encode_mask(v, 3) for v in values])
    got = sp.popcount_rows(masks)
    want = [bin(v).count("1") for v in values]
    assert got.tolist() == want


@pytest.mark.parametrize("k", [0, 1, 5, 63, 64, 65, 127, 130])
def test_below_row(k):
    row = sp.below_row(k, 3)
    assert sp.decode_mask(row) == (1 << k) - 1


@given(
    st.lists(st.integers(0, 2**100 - 1), min_size=1, max_size=30),
    st.integers(0, 99),
)
def test_count_above_below(values, k):
    masks = np.stack([sp.encode_mask(v, 2) for v in values])
    above = sp.count_above_bit(masks, k)
    below = sp.count_below_bit(masks, k)
    for i, v in enumerate(values):
        want_above = bin(v >> (k + 1)).count("1")
        want_below = bin(v & ((1 << k) - 1)).count("1")
        assert above[i] == want_above
        assert below[i] == want_below


def test_lexsort_is_integer_order():
    rng = np.random.default_rng(5)
    values = [int(v) for v in rng.integers(0, 2**63, size=50)]
    values += [v | (1 << 100) for v in values[:10]]
    masks = np.stack([sp.encode_mask(v, 2) for v in values])
    order = sp.lexsort_rows(masks)
    sorted_vals = [values[i] for i in order]
    assert sorted_vals == sorted(values)


def test_canonicalize_merges_and_drops():
    masks = np.stack(
        [sp.encode_mask(v, 1) for v in [5, 3, 5, 9, 3]]
    )
    amps = np.array([1.0, 2.0, -1.0, 4.0, 1.0], dtype=complex)
    out_m, out_a = sp.canonicalize(masks, amps)
    got = {sp.decode_mask(r): a for r, a in zip(out_m, out_a)}
    # the two mask-5 rows cancel exactly and disappear
    assert got == {3: 3.0, 9: 4.0}
    assert sp.decode_mask(out_m[0]) < sp.decode_mask(out_m[1])


def test_canonicalize_relative_tol():
    masks = np.stack([sp.encode_mask(v, 1) for v in [1, 2]])
    amps = np.array([1.0, 1e-14], dtype=complex)
    out_m, out_a = sp.canonicalize(masks, amps, tol=1e-10)
    assert out_m.shape[0] == 1
    assert sp.decode_mask(out_m[0]) == 1


def test_prune_keep_budget_semantics():
    amps = np.array([1.0, 1e-9, 0.5, 1e-9], dtype=complex)
    keep, dropped = sp.prune_keep(amps, 1e-6)
    assert keep.tolist() == [True, False, True, False]
    assert dropped == pytest.approx(2e-18)
    # the budget bounds the dropped mass: sqrt(dropped) <= budget * ||amps||
    assert np.sqrt(dropped) <= 1e-6 * np.linalg.norm(amps)


def test_prune_keep_force_first_not_counted_as_dropped():
    amps = np.array([1e-12, 1.0], dtype=complex)
    keep, dropped = sp.prune_keep(amps, 1e-6, force_first=True)
    # forcing the first row keeps everything, reported as the no-op case
    assert keep is None
    assert dropped == 0.0
    keep, dropped = sp.prune_keep(
        np.array([1e-12, 1.0, 1e-12], dtype=complex), 1e-6, force_first=True
    )
    assert keep.tolist() == [True, True, False]
    assert dropped == pytest.approx(1e-24)


def test_prune_keep_no_work_returns_none():
    amps = np.array([1.0, 0.9], dtype=complex)
    keep, dropped = sp.prune_keep(amps, 1e-6)
    assert keep is None and dropped == 0.0
    keep, dropped = sp.prune_keep(amps[:0], 1e-6)
    assert keep is None and dropped == 0.0


@settings(max_examples=50)
@given(
    st.lists(
        st.tuples(
            st.integers(0, 2**40 - 1),
            st.complex_numbers(
                max_magnitude=10.0, allow_nan=False, allow_infinity=False
            ),
        ),
        min_size=0,
        max_size=40,
    )
)
def test_canonicalize_preserves_sums(pairs):
    if pairs:
        masks = np.stack([sp.encode_mask(v, 1) for v, _ in pairs])
        amps = np.array([a for _, a in pairs], dtype=complex)
    else:
        masks = sp.empty_masks(1)
        amps = np.zeros(0, dtype=complex)
    out_m, out_a = sp.canonicalize(masks, amps)
    want = {}
    for v, a in pairs:
        want[v] = want.get(v, 0.0) + a
    want = {v: a for v, a in want.items() if a != 0}
    got = {sp.decode_mask(r): a for r, a in zip(out_m, out_a)}
    assert set(got) == set(want)
    for v in want:
        assert got[v] == pytest.approx(want[v], abs=1e-12)
    # canonical order: strictly increasing as integers
    ints = [sp.decode_mask(r) for r in out_m]
    assert ints == sorted(ints)
