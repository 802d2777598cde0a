"""Dictionary evaluation, degree maps, rescaling and basis conversion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttlaw.dictionaries import dict_eval, featurize, from_descriptor, make_dictionary
from ttlaw.errors import ConfigError, InputError, RepresentationError


def _legendre_recurrence(k, x):
    """(k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}, seeded P_0=1, P_1=x."""
    if k == 0:
        return 1.0
    prev, cur = 1.0, x
    for n in range(1, k):
        prev, cur = cur, ((2 * n + 1) * x * cur - n * prev) / (n + 1)
    return cur


def test_monomial_values():
    dic = make_dictionary("monomial", 2, [(-1.0, 1.0)])
    np.testing.assert_array_equal(dict_eval(dic, 1, 2.0), [1.0, 2.0, 4.0])


def test_trigonometric_values_at_zero():
    dic = make_dictionary("trigonometric", domains=[(0.0, 2 * np.pi)])
    np.testing.assert_allclose(dict_eval(dic, 1, 0.0), [1.0, 0.0, 1.0], atol=1e-15)


def test_legendre_at_one_unnormalized():
    dic = make_dictionary("legendre", 3, [(-1.0, 1.0)])
    np.testing.assert_allclose(dict_eval(dic, 1, 1.0), np.ones(4), rtol=1e-14)
    # spot-check interior values against the three-term recurrence
    for x in (-0.7, 0.1, 0.9):
        expected = [_legendre_recurrence(k, x) for k in range(4)]
        np.testing.assert_allclose(dict_eval(dic, 1, x), expected, rtol=1e-13)


def test_make_dictionary_degree_maps():
    dic = make_dictionary("legendre", 3, [(-1.0, 1.0)] * 5)
    assert dic.p == 4 and dic.weights == (0, 1, 2, 3)
    dic = make_dictionary("trigonometric", domains=[(0.0, 2 * np.pi)] * 5)
    assert dic.p == 3 and dic.weights == (0, 1, 1)
    dic = make_dictionary("monomial", 0, [(0.0, 1.0)])
    assert dic.p == 1 and dic.weights == (0,)


def test_make_dictionary_unknown_kind():
    with pytest.raises(ConfigError):
        make_dictionary("chebyshev", 3, [(-1.0, 1.0)])


def test_featurize():
    dic = make_dictionary("monomial", 1, [(-1.0, 1.0)] * 2)
    f1, f2 = featurize(dic, np.zeros(2))
    np.testing.assert_array_equal(f1, [1.0, 0.0])
    np.testing.assert_array_equal(f2, [1.0, 0.0])

    trig = make_dictionary("trigonometric", domains=[(0.0, 2 * np.pi)] * 2)
    g1, g2 = featurize(trig, np.array([np.pi / 2, np.pi]))
    np.testing.assert_allclose(g1, [1.0, 1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(g2, [1.0, 0.0, -1.0], atol=1e-15)

    with pytest.raises(InputError):
        featurize(dic, np.zeros(3))


def test_non_finite_input_rejected():
    dic = make_dictionary("monomial", 2, [(-1.0, 1.0)])
    with pytest.raises(InputError):
        dict_eval(dic, 1, np.nan)


def test_affine_rescaling_matches_canonical():
    shifted = make_dictionary("legendre", 4, [(3.0, 7.0)])
    canonical = make_dictionary("legendre", 4, [(-1.0, 1.0)])
    for x in np.linspace(3.0, 7.0, 11):
        t = 2.0 * (x - 3.0) / 4.0 - 1.0
        np.testing.assert_array_equal(
            dict_eval(shifted, 1, x), dict_eval(canonical, 1, t)
        )


def test_out_of_domain_counted_not_raised():
    dic = make_dictionary("monomial", 2, [(-1.0, 1.0)])
    assert dic.out_of_domain_count == 0
    dict_eval(dic, 1, 1.5)
    assert dic.out_of_domain_count == 1
    dic.eval_mode(1, np.array([-2.0, 0.0, 2.0]))
    assert dic.out_of_domain_count == 3


def test_batch_matches_scalar():
    dic = make_dictionary("legendre", 3, [(0.0, 4.0)] * 3)
    X = np.random.default_rng(3).uniform(0.0, 4.0, size=(11, 3))
    feats = dic.featurize_batch(X)
    for m in range(11):
        for ell in range(3):
            np.testing.assert_array_equal(feats[ell][m], dic.eval_mode(ell + 1, X[m, ell]))


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-50.0, 50.0))
def test_trigonometric_identity(x):
    dic = make_dictionary("trigonometric", domains=[(0.0, 2 * np.pi)])
    psi = dic.eval_mode(1, x)
    assert abs(psi[1] ** 2 + psi[2] ** 2 - 1.0) <= 1e-14


@pytest.mark.parametrize("kind", ["monomial", "legendre"])
def test_degree_map_consistency(kind):
    # each basis function, fitted as a polynomial of its canonical variable,
    # has degree exactly w(i)
    dic = make_dictionary(kind, 5, [(-1.0, 1.0)])
    t = np.linspace(-1.0, 1.0, 41)
    values = dic.eval_mode(1, t)
    for i, w in enumerate(dic.weights):
        coeffs = np.polynomial.polynomial.polyfit(t, values[:, i], deg=5)
        assert abs(coeffs[w]) > 1e-8
        assert np.all(np.abs(coeffs[w + 1 :]) < 1e-8)


def test_poly_coeffs_roundtrip():
    dic = make_dictionary("legendre", 4, [(2.0, 6.0)])
    power = np.array([0.5, -1.0, 0.0, 2.0])  # 0.5 - x + 2 x^3
    vec = dic.poly_coeffs(power, mode=1)
    for x in np.linspace(2.0, 6.0, 9):
        direct = 0.5 - x + 2.0 * x**3
        expanded = float(vec @ dic.eval_mode(1, x))
        assert abs(expanded - direct) <= 1e-11 * max(1.0, abs(direct))


def test_poly_coeffs_rejects_excess_degree():
    dic = make_dictionary("monomial", 2, [(-1.0, 1.0)])
    with pytest.raises(RepresentationError):
        dic.poly_coeffs([0.0, 0.0, 0.0, 1.0], mode=1)
    trig = make_dictionary("trigonometric", domains=[(0.0, 2 * np.pi)])
    with pytest.raises(RepresentationError):
        trig.poly_coeffs([0.0, 1.0], mode=1)


def test_descriptor_roundtrip():
    dic = make_dictionary("trigonometric", domains=[(0.0, 2 * np.pi)] * 4)
    clone = from_descriptor(dic.descriptor())
    assert clone.kind == dic.kind
    assert clone.p == dic.p
    assert clone.weights == dic.weights
    assert clone.domains == dic.domains
