import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import integer_decomposable, real_decomposable, sweep_exact
from topokde.densities import GridFamily, pdf_on_grid
from topokde.exceptions import EmptyInput, NegativeInput
from topokde.unimodal import count_local_maxima, is_unimodal, sweep_decompose, ucat


def test_unimodal_curve_is_one_component():
    dec = sweep_decompose([0, 1, 2, 1, 0])
    assert dec.ucat == 1
    np.testing.assert_array_equal(dec.components[0], [0, 1, 2, 1, 0])


def test_two_peaks_hand_example():
    dec = sweep_decompose([1, 3, 1, 2, 1])
    np.testing.assert_allclose(dec.components, [[1, 3, 1, 1, 0], [0, 0, 0, 1, 1]], atol=1e-15)
    np.testing.assert_array_equal(dec.mode_locus, [1, 3])


def test_integer_tie_after_subtraction():
    # after the first peel the residual has an exact plateau 2,2 before 3;
    # normalising first would break the tie and add a component
    dec = sweep_decompose([2, 1, 3, 2, 3, 2, 2])
    assert dec.ucat == 2
    np.testing.assert_allclose(dec.components, [[2, 1, 1, 0, 0, 0, 0],
                                                [0, 0, 2, 2, 3, 2, 2]], atol=0)


@pytest.mark.parametrize("m,expected", [(5, 3), (6, 3), (7, 3), (8, 4), (9, 4), (10, 4)])
def test_grid_family_k1(m, expected):
    assert ucat(pdf_on_grid(GridFamily(1, m)).f) == expected


@pytest.mark.parametrize("m", range(5, 11))
def test_grid_family_k04(m):
    assert ucat(pdf_on_grid(GridFamily(0.4, m)).f) == 2


@pytest.mark.parametrize("m", range(5, 11))
def test_category_ignores_shallow_maxima(m):
    # every bump of the k = 0.4 curves is a local maximum, yet two
    # components suffice
    f = pdf_on_grid(GridFamily(0.4, m)).f
    assert count_local_maxima(f) == m
    assert ucat(f) == 2


def test_single_gaussian():
    x = np.linspace(-1, 2, 500)
    for sd in (0.01, 0.2, 3.0):
        assert ucat(np.exp(-0.5 * ((x - 0.3) / sd) ** 2)) == 1


def test_errors():
    with pytest.raises(NegativeInput):
        sweep_decompose([1, -1e-300, 1])
    with pytest.raises(EmptyInput):
        sweep_decompose([0, 0, 0])
    with pytest.raises(EmptyInput):
        sweep_decompose([])


def test_count_local_maxima_examples():
    assert count_local_maxima([0, 1, 0, 1, 0]) == 2
    assert count_local_maxima([1, 1, 1]) == 1
    assert count_local_maxima([0, 0, 0]) == 0
    assert count_local_maxima([1, 2, 2, 1, 2]) == 2


def test_is_unimodal():
    assert is_unimodal([0, 1, 1, 3, 2, 2, 0])
    assert not is_unimodal([0, 2, 1, 2, 0])
    assert is_unimodal([3])
    assert not is_unimodal([0, 1, 2], peak=0)


def random_curve(rng, max_len=64):
    """Mixed generator: continuous, sparse, integer-valued and plateau-heavy."""
    n = int(rng.integers(1, max_len + 1))
    style = rng.integers(4)
    if style == 0:
        f = rng.random(n)
    elif style == 1:
        f = rng.random(n) * (rng.random(n) < 0.5)
    elif style == 2:
        f = rng.integers(0, 5, n).astype(float)
    else:
        f = np.repeat(rng.random(max(1, n // 4)), 4)[:n] * 10.0 ** rng.uniform(-6, 6)
    if not f.any():
        f[rng.integers(n)] = 1.0
    return f


def check_invariants(f):
    dec = sweep_decompose(f)
    assert dec.reconstruction_error() < 1e-9
    assert np.all(dec.components >= 0)
    for u, p in zip(dec.components, dec.mode_locus):
        assert is_unimodal(u, p)
        assert u.sum() > np.finfo(float).eps * f.sum()
    assert dec.ucat <= count_local_maxima(f)
    assert ucat(f[::-1]) == dec.ucat
    return dec


def test_invariants_fuzz():
    rng = np.random.default_rng(20240601)
    for _ in range(2000):
        check_invariants(random_curve(rng))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_subnormal=False), min_size=1, max_size=64)
       .filter(lambda v: sum(v) > 0))
def test_invariants_hypothesis(values):
    check_invariants(np.asarray(values))


def test_matches_exact_rational_sweep():
    # dyadic values keep the float sweep exact, so results must agree bit for bit
    rng = np.random.default_rng(7)
    for _ in range(400):
        n = int(rng.integers(1, 25))
        f = rng.integers(0, 64, n) / 16.0
        if not f.any():
            continue
        ours = sweep_decompose(f).components
        ref = np.array(sweep_exact(f), dtype=float)
        assert ours.shape == ref.shape
        np.testing.assert_array_equal(ours, ref)


def test_matches_exact_rational_sweep_generic_floats():
    rng = np.random.default_rng(8)
    for _ in range(400):
        n = int(rng.integers(1, 30))
        f = rng.random(n) * (rng.random(n) < 0.8)
        if not f.any():
            continue
        ours = sweep_decompose(f).components
        ref = np.array(sweep_exact(f), dtype=float)
        assert ours.shape == ref.shape
        np.testing.assert_allclose(ours, ref, atol=1e-12)


def test_minimal_on_small_integer_curves():
    rng = np.random.default_rng(11)
    for _ in range(120):
        n = int(rng.integers(1, 9))
        f = rng.integers(0, 4, n)
        if not f.any():
            continue
        k = ucat(f)
        assert real_decomposable(f, k)
        if k > 1:
            assert not real_decomposable(f, k - 1), f
            assert not integer_decomposable(f, k - 1), f


def test_minimality_oracles_sanity():
    assert integer_decomposable([1, 3, 1, 2, 1], 2)
    assert not integer_decomposable([1, 3, 1, 2, 1], 1)
    assert real_decomposable([1, 0, 1], 2) and not real_decomposable([1, 0, 1], 1)
