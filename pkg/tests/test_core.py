import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gse_lab.core import (
    M_MAX,
    Distribution,
    GseSignature,
    OrderSet,
    SortedDistribution,
    ValidationError,
    escort,
    gse,
    gse_gradient,
    gse_signature,
    load_distribution,
    load_signature,
    make_sorted,
    phi,
    scalar_profile,
    shannon,
    uniform,
)
from oracles import gse_direct, gse_mp, grad_fd, shannon_direct

P = (0.5, 0.3, 0.2)

# mpmath at 40 digits
H_P = {
    0.5: 1.0809736435470224,
    1.0: 1.0296530140645735,
    2.0: 0.85358367914189747,
    3.7: 0.50696762071434684,
}


@pytest.mark.parametrize("m, expected", sorted(H_P.items()))
def test_gse_reference_values(m, expected):
    assert gse(P, m) == pytest.approx(expected, rel=0, abs=1e-15)


@pytest.mark.parametrize(
    "p, m, expected",
    [
        ((0.75, 0.25), 2.0, 0.32508297339144824),
        ((0.9, 0.1), 1.0, 0.32508297339144824),
        ((0.35, 0.35, 0.15, 0.15), 2.0, 1.1247244013917668),
        ((0.6, 0.2, 0.2), 0.5, 1.0620240281342893),
    ],
)
def test_gse_more_reference_values(p, m, expected):
    assert gse(p, m) == pytest.approx(expected, abs=1e-15)


def test_order_one_is_shannon():
    assert gse(P, 1.0) == pytest.approx(shannon(P), abs=1e-15)


@pytest.mark.parametrize("K", [2, 3, 7, 50])
@pytest.mark.parametrize("m", [0.1, 1.0, 8.0, M_MAX])
def test_uniform_is_maximal(K, m):
    assert gse(uniform(K), m) == pytest.approx(math.log(K), abs=1e-13)


def test_large_order_extreme_masses():
    # direct powers underflow here; the shifted form must not
    p = [1 - 2e-12, 1e-12, 1e-12]
    assert gse(p, 40.0) == pytest.approx(float(gse_mp(p, 40.0)), abs=1e-15)
    assert gse([0.6, 0.4], 64.0) == pytest.approx(float(gse_mp([0.6, 0.4], 64.0)), abs=1e-15)


def test_escort_values():
    w = escort(P, 2.0).probs
    np.testing.assert_allclose(w, np.array([25, 9, 4]) / 38, rtol=1e-15)
    assert isinstance(escort(P, 2.0), Distribution)


def test_scalar_profile_reference():
    prof = scalar_profile(P, 2.0)
    assert prof.power_sum == pytest.approx(0.38, rel=1e-15)
    assert prof.log_power_sum == pytest.approx(-0.9675840262617056, abs=1e-15)
    assert prof.mu == pytest.approx(-0.91058385270180154, abs=1e-15)
    assert prof.alpha == pytest.approx(-0.21743667214185623, abs=1e-15)
    assert prof.alpha_prime == pytest.approx(0.10290129840622019, abs=1e-15)
    prof = scalar_profile(P, 0.5)
    assert prof.power_sum == pytest.approx(1.7020429341916716, rel=1e-15)
    assert prof.log_power_sum == pytest.approx(0.5318292555625558, abs=1e-15)
    assert prof.mu == pytest.approx(-1.0982887759689333, abs=1e-15)
    assert prof.alpha == pytest.approx(-0.40514159540898799, abs=1e-15)
    assert prof.alpha_prime == pytest.approx(0.14043530209080931, abs=1e-15)


def test_scalar_profile_needs_sorted_input():
    with pytest.raises(ValidationError):
        scalar_profile((0.2, 0.5, 0.3), 2.0)


def test_gradient_reference():
    g = gse_gradient(P, 2.0)
    np.testing.assert_allclose(g, [-1.144403537588717, 0.92649142618147732, 1.4712717046995765], rtol=1e-14)


def test_gradient_matches_finite_differences(rng):
    for _ in range(20):
        K = int(rng.integers(2, 8))
        p = rng.dirichlet(np.ones(K)) + 1e-3
        p /= p.sum()
        m = float(rng.uniform(0.2, 5))
        g, fd = gse_gradient(p, m), grad_fd(p, m)
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g) + 1e-10


def test_gradient_zero_at_uniform():
    np.testing.assert_allclose(gse_gradient(uniform(5), 3.0), 0.0, atol=1e-14)


def test_phi_values():
    assert phi(2.0, 0.0, -0.3) == 0.0
    u = np.array([-1.0, -0.5])
    np.testing.assert_allclose(phi(2.0, u, -0.2), (-0.2 - u) * np.exp(u) + 0.2, rtol=1e-15)
    with pytest.raises(ValidationError):
        phi(2.0, 0.1, 0.0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=10),
    st.floats(0.1, 8.0),
)
def test_gse_matches_escort_shannon(w, m):
    p = np.array(w) / np.sum(w)
    assert abs(gse(p, m) - shannon_direct(escort(p, m).probs)) <= 1e-12
    assert abs(gse(p, m) - gse_direct(p, m)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=8), st.floats(0.1, 8.0), st.randoms())
def test_gse_is_permutation_invariant(w, m, r):
    p = np.array(w) / np.sum(w)
    q = p.copy()
    r.shuffle(q)
    assert gse(q, m) == gse(p, m)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=8), st.floats(0.1, 8.0))
def test_gse_bounds(w, m):
    p = np.array(w) / np.sum(w)
    assert -1e-15 <= gse(p, m) <= math.log(len(p)) + 1e-13


@pytest.mark.parametrize(
    "probs",
    [[1.0], [0.5, 0.6], [0.5, 0.5, 0.0], [1.2, -0.2], [0.5, float("nan")], [[0.5, 0.5]], []],
)
def test_distribution_rejects(probs):
    with pytest.raises(ValidationError):
        Distribution(probs)


def test_distribution_is_readonly_and_hashable():
    d = Distribution(P)
    with pytest.raises(ValueError):
        d.probs[0] = 0.4
    assert d == Distribution(list(P))
    assert hash(d) == hash(Distribution(list(P)))
    assert d != SortedDistribution(P)


def test_sorted_distribution_ties_and_chart():
    s = SortedDistribution([0.4, 0.2, 0.2, 0.2])
    assert s.multiplicity == (1, 3)
    assert s.has_ties
    np.testing.assert_array_equal(s.chart, [0.2, 0.2, 0.2])
    t = SortedDistribution.from_chart([0.3, 0.2])
    np.testing.assert_allclose(t.probs, [0.5, 0.3, 0.2])
    assert not t.has_ties
    with pytest.raises(ValidationError):
        SortedDistribution([0.2, 0.8])


def test_make_sorted_normalizes():
    s = make_sorted([1, 3, 2])
    np.testing.assert_allclose(s.probs, [0.5, 1 / 3, 1 / 6])
    assert Distribution([0.2, 0.5, 0.3]).sorted() == SortedDistribution([0.5, 0.3, 0.2])


@pytest.mark.parametrize("text", ["", "0.5,0.5", "1,1.0", "-1", "0", "0.5,x", "1,65"])
def test_orderset_rejects(text):
    with pytest.raises(ValidationError):
        OrderSet.parse(text)


def test_orderset_parse_and_default():
    assert OrderSet.parse("0.5, 2").tolist() == [0.5, 2.0]
    assert OrderSet.parse("2,0.5") == OrderSet.parse("0.5,2")
    with pytest.raises(ValidationError):
        OrderSet([2.0, 1.0])
    M = OrderSet.default_for(4)
    assert len(M) == 3
    assert M == OrderSet(M.orders.copy())
    assert len({M, OrderSet(M.orders.copy())}) == 1


def test_signature_json_round_trip():
    sig = gse_signature(P, [0.5, 2.0])
    back = GseSignature.from_json(json.loads(json.dumps(sig.to_json())))
    assert back == sig


def test_signature_from_json_sorts_pairs():
    sig = GseSignature.from_json({"orders": [2.0, 0.5], "values": [0.85, 1.08]})
    assert sig.orders.tolist() == [0.5, 2.0]
    assert sig.values.tolist() == [1.08, 0.85]


@pytest.mark.parametrize(
    "obj", [{"orders": [1.0]}, {"orders": [1.0, 2.0], "values": [0.1]}, {"orders": [1.0], "values": ["a"]}]
)
def test_signature_from_json_rejects(obj):
    with pytest.raises(ValidationError):
        GseSignature.from_json(obj)


def test_signature_range_check():
    with pytest.raises(ValidationError):
        GseSignature([1.0], [2.0]).check_range(2)
    GseSignature([1.0], [math.log(2)]).check_range(2)


def test_loaders(tmp_path):
    f = tmp_path / "p.json"
    f.write_text(json.dumps({"probs": list(P)}))
    assert load_distribution(f) == Distribution(P)
    g = tmp_path / "s.json"
    g.write_text(json.dumps(gse_signature(P, [1.0]).to_json()))
    assert load_signature(g).values[0] == pytest.approx(H_P[1.0], abs=1e-15)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValidationError):
        load_distribution(bad)
