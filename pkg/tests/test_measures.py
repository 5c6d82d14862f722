import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import make_data, pairwise, random_data, scan_stats
from fairmask.dataset import DatasetView
from fairmask.errors import UndefinedRate
from fairmask.measures import (
    BUILTIN_MEASURES,
    PositiveRates,
    available_measures,
    evaluate,
    evaluate_all,
    get_measure,
    positive_rates,
    register_measure,
    sdp_avg,
    sdp_max,
    sdp_sum,
    unregister_measure,
)

TOL = 1e-12
rate_vectors = st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=2, max_size=8)


def test_hand_values():
    r = [0.6, 0.4, 0.2]
    assert sdp_sum(r) == pytest.approx(0.8, abs=TOL)
    assert sdp_avg(r) == pytest.approx(0.8 * 2 / 6, abs=TOL)
    assert sdp_max(r) == pytest.approx(0.4, abs=TOL)


@pytest.mark.parametrize("func", [sdp_sum, sdp_avg, sdp_max])
def test_equal_rates_score_zero(func):
    assert func([0.5, 0.5, 0.5]) == 0.0


def test_two_groups():
    assert sdp_sum([1.0, 0.0]) == 1.0
    assert sdp_max([1.0, 0.0]) == 1.0
    assert sdp_avg([0.3, 0.9]) == sdp_sum([0.3, 0.9])


def test_positive_rates_examples():
    view = DatasetView.full(make_data([1, 1, 2, 2], [1, 0, 1, 1]))
    np.testing.assert_array_equal(positive_rates(view).rates, [0.5, 1.0])
    view = DatasetView.full(make_data([1, 2, 3, 1], [1, 1, 1, 1]))
    np.testing.assert_array_equal(positive_rates(view).rates, [1.0, 1.0, 1.0])


def test_rates_match_scan_on_random_view(rng):
    data = random_data(rng, 400, 5)
    view = DatasetView(data, np.sort(rng.choice(400, 200, replace=False)))
    counts, pos = scan_stats(view)
    expected = [p / c for p, c in zip(pos, counts)]
    np.testing.assert_allclose(positive_rates(view).rates, expected, rtol=0, atol=TOL)


def test_empty_group_is_undefined():
    data = make_data([1, 2, 3], [1, 0, 1])
    view = DatasetView(data, [0, 1])
    rates = positive_rates(view)
    assert np.isnan(rates.rates[2]) and not rates.defined
    for kind in BUILTIN_MEASURES:
        with pytest.raises(UndefinedRate):
            evaluate(kind, view)
    assert evaluate_all(view) == {k: None for k in BUILTIN_MEASURES}


def test_evaluate_matches_pair_loop(rng):
    for _ in range(20):
        data = random_data(rng, 100, int(rng.integers(2, 7)))
        view = DatasetView.full(data)
        s, a, m = pairwise(positive_rates(view).rates.tolist())
        assert evaluate("sdp_sum", view) == pytest.approx(s, abs=TOL)
        assert evaluate("sdp_avg", view) == pytest.approx(a, abs=TOL)
        assert evaluate("sdp_max", view) == pytest.approx(m, abs=TOL)


@settings(max_examples=200)
@given(rate_vectors)
def test_kernels_match_pair_loop(r):
    s, a, m = pairwise(r)
    assert sdp_sum(r) == pytest.approx(s, abs=1e-9)
    assert sdp_avg(r) == pytest.approx(a, abs=1e-9)
    assert sdp_max(r) == m


@settings(max_examples=200)
@given(rate_vectors, st.randoms())
def test_permutation_invariance(r, rnd):
    shuffled = list(r)
    rnd.shuffle(shuffled)
    for func in (sdp_sum, sdp_avg, sdp_max):
        assert func(shuffled) == pytest.approx(func(r), abs=TOL)


@settings(max_examples=200)
@given(rate_vectors)
def test_ordering_and_scaling(r):
    k = len(r)
    s, a, m = sdp_sum(r), sdp_avg(r), sdp_max(r)
    assert 0 <= m <= s + TOL
    assert a <= m + TOL
    assert 0 <= a <= 1 and 0 <= m <= 1
    assert s == pytest.approx(k * (k - 1) / 2 * a, abs=TOL)
    assert s <= k * (k - 1) / 2 * m + TOL


@settings(max_examples=200)
@given(rate_vectors)
def test_zero_iff_parity(r):
    equal = len(set(r)) == 1
    for func in (sdp_sum, sdp_avg, sdp_max):
        assert (func(r) == 0.0) == equal


@given(st.floats(0, 1), st.integers(2, 8))
def test_constant_rates_are_zero(value, k):
    assert sdp_sum([value] * k) == 0.0


def test_accepts_positive_rates_object():
    rates = PositiveRates(np.array([0.6, 0.4, 0.2]), np.array([5, 5, 5]))
    assert sdp_max(rates) == pytest.approx(0.4, abs=TOL)
    with pytest.raises(ValueError):
        sdp_sum([0.5])


def test_upper_bounds():
    assert get_measure("sdp_sum").upper_bound(4) == 6
    assert get_measure("sdp_max").upper_bound(4) == 1
    assert sdp_sum([0, 0, 1, 1]) <= 6


def test_custom_measure_registry():
    def minority_rate(view):
        return float(positive_rates(view).rates.min())

    register_measure("min_rate", minority_rate, 1.0)
    try:
        assert "min_rate" in available_measures()
        view = DatasetView.full(make_data([1, 1, 2, 2], [1, 0, 1, 1]))
        assert evaluate("min_rate", view) == 0.5
        assert get_measure("min_rate").upper_bound(3) == 1.0
    finally:
        unregister_measure("min_rate")
    assert "min_rate" not in available_measures()
    with pytest.raises(ValueError):
        register_measure("sdp_sum", minority_rate, 1.0)
    with pytest.raises(KeyError):
        get_measure("nope")


@given(st.lists(st.integers(0, 1), min_size=6, max_size=6))
def test_measures_ignore_features(labels):
    groups = [1, 2, 3, 1, 2, 3]
    a = make_data(groups, labels, features=np.zeros((6, 1)))
    b = make_data(groups, labels, features=np.arange(12.0).reshape(6, 2) * 1e6)
    assert evaluate_all(DatasetView.full(a)) == evaluate_all(DatasetView.full(b))
