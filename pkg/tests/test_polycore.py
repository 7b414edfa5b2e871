import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from pirc.polycore import (
    Poly,
    PolynomialError,
    cancel_common_factors,
    companion_matrix,
    coprime_test,
    hurwitz_test,
    min_root_distance,
    poly_arith,
    resultant,
    roots,
    routh_array,
    sylvester_matrix,
)

coef = st.floats(-5, 5, allow_nan=False).filter(lambda v: abs(v) > 1e-3)
poly_st = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=7).flatmap(
    lambda body: coef.map(lambda lead: Poly(body + [lead]))
)


def sorted_roots(p):
    r = roots(p)
    return r[np.lexsort((r.imag, r.real))]


def match_multiset(a, b, tol):
    a, b = list(a), list(b)
    if len(a) != len(b):
        return False
    for z in a:
        k = int(np.argmin([abs(z - w) for w in b]))
        if abs(z - b[k]) > tol:
            return False
        b.pop(k)
    return True


class TestPolyBasics:
    def test_trailing_zeros_trimmed(self):
        p = Poly([1.0, 2.0, 0.0, 0.0])
        assert p.coeffs == (1.0, 2.0)
        assert p.degree == 1

    def test_zero_polynomial(self):
        assert Poly([]).is_zero and Poly([0.0, 0.0]).is_zero
        assert Poly([0.0]).degree == -1

    def test_mul_by_hand(self):
        assert poly_arith(Poly([1, 1]), Poly([2, 1]), "mul") == Poly([2, 3, 1])
        assert poly_arith(Poly([1, 0, 1]), Poly([-1, 1]), "mul") == Poly([-1, 1, -1, 1])

    def test_add_inverse_is_zero(self):
        assert poly_arith(Poly([1, 1]), Poly([-1, -1]), "add").is_zero

    def test_sub(self):
        assert poly_arith(Poly([1, 2, 3]), Poly([1, 2, 3]), "sub").is_zero

    def test_unknown_op(self):
        with pytest.raises((PolynomialError, ValueError)):
            poly_arith(Poly([1]), Poly([1]), "div")

    def test_horner(self):
        p = Poly([2, 3, 1])
        assert p(1.0) == 6.0
        assert p(-1.0) == 0.0

    def test_divmod(self):
        q, r = divmod(Poly([2, 3, 1]), Poly([1, 1]))
        assert q.allclose(Poly([2, 1])) and r.is_zero

    def test_from_roots(self):
        assert Poly.from_roots([-1, -2, -3]).allclose(Poly([6, 11, 6, 1]))
        p = Poly.from_roots([complex(-1, 2), complex(-1, -2)])
        assert p.allclose(Poly([5, 2, 1]))

    def test_json_roundtrip(self):
        p = Poly([0.5, -1.25, 3.0])
        assert Poly(p.to_json()) == p

    def test_str(self):
        assert str(Poly([3, 1])) == "s + 3"


@given(poly_st, poly_st)
def test_degree_of_product(a, b):
    assert (a * b).degree == a.degree + b.degree


class TestRoots:
    def test_difference_of_squares(self):
        assert np.allclose(sorted_roots(Poly([-1, 0, 1])), [-1, 1])

    def test_imaginary_pair(self):
        assert match_multiset(roots(Poly([1, 0, 1])), [1j, -1j], 1e-12)

    def test_cubic(self):
        assert np.allclose(sorted_roots(Poly([6, 11, 6, 1])), [-3, -2, -1])

    def test_zero_poly_rejected(self):
        with pytest.raises(PolynomialError):
            roots(Poly([]))

    def test_companion_matrix_of_monic(self):
        M = companion_matrix(Poly([2, 3, 1]))
        assert np.allclose(np.poly(M), [1, 3, 2])

    @given(poly_st)
    def test_residual_small(self, p):
        assume(p.degree >= 1)
        scale = p.norm()
        for r in roots(p):
            # residual relative to coefficient norm, with a root-magnitude allowance
            assert abs(p(r)) <= 1e-8 * scale * max(1.0, abs(r)) ** p.degree

    def test_product_roots_union(self, rng):
        for _ in range(200):
            ra = rng.uniform(-3, 3, size=rng.integers(1, 7))
            rb = rng.uniform(-3, 3, size=rng.integers(1, 7))
            a, b = Poly.from_roots(ra), Poly.from_roots(rb)
            assume_distinct = np.min(np.abs(np.subtract.outer(np.r_[ra, rb], np.r_[ra, rb]))
                                     + np.eye(len(ra) + len(rb)))
            if assume_distinct < 1e-2:
                continue
            assert match_multiset(roots(a * b), np.r_[ra, rb], 1e-6)


class TestHurwitz:
    @pytest.mark.parametrize(
        "coeffs, expected",
        [([1, 1], True), ([8, 2, 1, 1], False), ([1, 1, 1], True), ([1, 0, 1], False),
         ([-1, 1], False), ([6, 11, 6, 1], True), ([-6, -11, -6, -1], True)],
    )
    def test_examples(self, coeffs, expected):
        assert hurwitz_test(Poly(coeffs)) is expected

    def test_degenerate_flag(self):
        rep = routh_array(Poly([1, 0, 1]))
        assert not rep.stable and rep.degenerate

    def test_unstable_not_degenerate(self):
        rep = routh_array(Poly([8, 2, 1, 1]))
        assert not rep.stable and not rep.degenerate and rep.sign_changes == 2

    def test_agrees_with_roots(self, rng):
        for _ in range(1000):
            deg = int(rng.integers(1, 9))
            p = Poly(list(rng.normal(size=deg)) + [rng.choice([-1, 1]) * rng.uniform(0.2, 2)])
            assert hurwitz_test(p) == bool(np.max(roots(p).real) < -1e-9)

    @given(st.lists(st.floats(0.05, 4), min_size=1, max_size=8))
    def test_hurwitz_from_left_half_plane_roots(self, mags):
        assert hurwitz_test(Poly.from_roots([-m for m in mags]))


class TestCoprime:
    def test_examples(self):
        assert coprime_test(Poly([1, 1]), Poly([2, 1]))
        assert not coprime_test(Poly([1, 1]), Poly([1, 2, 1]))
        assert not coprime_test(Poly.from_roots([-1, -3]), Poly.from_roots([-1, -2]))

    def test_constant_is_coprime(self):
        assert coprime_test(Poly([2.0]), Poly([1, 1]))

    def test_sylvester_shape_and_resultant(self):
        a, b = Poly([1, 1]), Poly([2, 1])
        assert sylvester_matrix(a, b).shape == (2, 2)
        assert abs(resultant(a, b)) == pytest.approx(1.0)
        assert abs(resultant(Poly([1, 1]), Poly([1, 2, 1]))) < 1e-12

    def test_root_distance(self):
        assert min_root_distance(Poly([1, 1]), Poly([3, 1])) == pytest.approx(2.0)

    @given(poly_st, poly_st, st.floats(0.1, 10), st.floats(-10, -0.1))
    def test_symmetric_and_scale_invariant(self, a, b, k1, k2):
        assume(a.degree >= 1 and b.degree >= 1)
        base = coprime_test(a, b)
        assert coprime_test(b, a) == base
        assert coprime_test(a.scale(k1), b.scale(k2)) == base

    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=3), st.floats(-3, 3))
    def test_shared_root_detected(self, others, shared):
        a = Poly.from_roots(others + [shared])
        b = Poly.from_roots([shared, shared + 7.5])
        assert not coprime_test(a, b)


class TestCancel:
    def test_cancels_shared_factor(self):
        num, den = cancel_common_factors(Poly.from_roots([-1, -3]), Poly.from_roots([-1, -2]))
        assert num.allclose(Poly([3, 1])) and den.allclose(Poly([2, 1]))

    def test_keeps_leading_coefficients(self):
        # 2(s+1) / (-3 s (s+1)) -> 2 / (-3 s)
        num, den = cancel_common_factors(Poly([2, 2]), Poly([0, -3, -3]))
        assert num.degree == 0 and den.degree == 1
        assert num(0.7) / den(0.7) == pytest.approx(Poly([2, 2])(0.7) / Poly([0, -3, -3])(0.7))

    def test_coprime_unchanged(self):
        num, den = cancel_common_factors(Poly([1, 1]), Poly([2, 1]))
        assert num == Poly([1, 1]) and den == Poly([2, 1])
