import pytest
import numpy as np
import warnings
import sympy
from fractions import Fraction

from gluskabi.polyops import (Polynomial, PolyMatrix, adjoint, ext_gcd, gcd_many, as_rational,
	controllability_check, controllability_report, is_unimodular, is_proper,
	unimodular_completion, partition_completion)
from gluskabi.exceptions import (DimensionError, ZeroPolynomialError, NotCoprimeError,
	NotMinimalError, SchemaError, ExperimentalWarning)

xi = Polynomial.xi()


def random_poly(rng, max_degree, lo=-5, hi=5, rational=True):
	d = int(rng.integers(0, max_degree + 1))
	coeffs = []
	for _ in range(d + 1):
		num = int(rng.integers(lo, hi + 1))
		den = int(rng.integers(1, 4)) if rational else 1
		coeffs.append(Fraction(num, den))
	return Polynomial(coeffs)


def random_matrix(rng, rows, cols, max_degree=2):
	return PolyMatrix([[random_poly(rng, max_degree) for _ in range(cols)] for _ in range(rows)])


def to_sympy(M):
	s = sympy.Symbol("s")
	return sympy.Matrix([[sum(sympy.Rational(c.numerator, c.denominator) * s ** i
		for i, c in enumerate(e.coeffs)) for e in row] for row in M.entries()]), s


def from_sympy(expr, s):
	p = sympy.Poly(sympy.expand(expr), s)
	coeffs = list(reversed(p.all_coeffs()))
	return Polynomial([Fraction(int(c.p), int(c.q)) for c in coeffs])


def test_as_rational():
	assert as_rational(0.1) == Fraction(1, 10)
	assert as_rational("-1/2") == Fraction(-1, 2)
	assert as_rational("1e-3") == Fraction(1, 1000)
	assert as_rational(3) == 3
	with pytest.raises(SchemaError):
		as_rational("one half")
	with pytest.raises(SchemaError):
		as_rational(True)
	with pytest.raises(SchemaError):
		as_rational(float("nan"))


arithmetic = [ ((xi + 1) * (xi - 1), Polynomial([-1, 0, 1]), "difference of squares"),
				(xi * xi, Polynomial.monomial(2), "xi squared"),
				((xi + 1) ** 3, Polynomial([1, 3, 3, 1]), "binomial cube"),
				(Polynomial([1, 2]) / 2, Polynomial([Fraction(1, 2), 1]), "scalar division") ]

@pytest.mark.parametrize("x,y,label", arithmetic)
def test_poly_arith(x, y, label):
	assert isinstance(label, str)
	assert x == y


def test_poly_arith_matrix():
	A = PolyMatrix([[xi, 1], [0, 1]])
	B = PolyMatrix([[1, 0], [1, xi]])
	assert A * B == PolyMatrix([[xi + 1, xi], [1, xi]])
	with pytest.raises(DimensionError):
		A * PolyMatrix([[1, 2, 3]])


def test_poly_composition_is_product():
	# (D+1)(D-2) applied to e^{t} equals the product polynomial evaluated at 1
	p, q = xi + 1, xi - 2
	assert (p * q)(1) == p(1) * q(1)
	assert Polynomial([1, 1]).compose(xi * 2) == Polynomial([1, 2])


def test_zero_polynomial_canonical():
	z = Polynomial([0, 0, 0])
	assert z.is_zero()
	assert z.degree == -1
	assert str(z) == "0"
	with pytest.raises(ZeroPolynomialError):
		divmod(xi, z)


def test_divmod():
	q, r = divmod(xi ** 3 + 2, xi - 1)
	assert q * (xi - 1) + r == xi ** 3 + 2
	assert r == Polynomial([3])


def test_str():
	assert str(xi ** 4 - 2 * xi ** 2) == "ξ⁴ - 2ξ²"
	assert str(Polynomial([Fraction(1, 2), 0, -1])) == "-ξ² + 1/2"


adjoints = [ (PolyMatrix([[xi + 1]]), PolyMatrix([[-xi + 1]])),
			(PolyMatrix([[xi, 1], [0, xi ** 2]]), PolyMatrix([[-xi, 0], [1, xi ** 2]])),
			(PolyMatrix([[1, -(xi + 1)], [0, 1]]), PolyMatrix([[1, 0], [xi - 1, 1]])) ]

@pytest.mark.parametrize("M,expected", adjoints)
def test_adjoint(M, expected):
	assert adjoint(M) == expected
	assert adjoint(adjoint(M)) == M


ext_gcds = [ (Polynomial(1), xi + 1, Polynomial(1), Polynomial(1), Polynomial()),
			(xi, xi + 1, Polynomial(1), Polynomial(-1), Polynomial(1)),
			(xi ** 2 - 1, xi - 1, xi - 1, Polynomial(), Polynomial(1)) ]

@pytest.mark.parametrize("p,q,g,alpha,beta", ext_gcds)
def test_ext_gcd(p, q, g, alpha, beta):
	g2, a2, b2 = ext_gcd(p, q)
	assert (g2, a2, b2) == (g, alpha, beta)
	assert a2 * p + b2 * q == g2


def test_ext_gcd_both_zero():
	with pytest.raises(ZeroPolynomialError):
		ext_gcd(Polynomial(), Polynomial())


def test_gcd_many():
	assert gcd_many([(xi - 1) * (xi + 2), (xi - 1) * xi, Polynomial()]) == xi - 1


completions = [ (Polynomial(1), xi + 1, PolyMatrix([[1, -(xi + 1)], [0, 1]])),
				(Polynomial(1), Polynomial(1), PolyMatrix([[1, -1], [0, 1]])),
				(xi, xi + 1, PolyMatrix([[-1, -(xi + 1)], [1, xi]])) ]

@pytest.mark.parametrize("N,P,expected", completions)
def test_unimodular_completion(N, P, expected):
	U = unimodular_completion(PolyMatrix([[N]]), PolyMatrix([[P]]))
	assert U == expected
	assert PolyMatrix([[N, P]]) * U == PolyMatrix([[1, 0]])
	assert is_unimodular(U)
	blocks = partition_completion(U, 1)
	assert blocks["U12"] == expected[:1, 1:]
	assert blocks["U22"] == expected[1:, 1:]


def test_unimodular_completion_not_coprime():
	with pytest.raises(NotCoprimeError):
		unimodular_completion(PolyMatrix([[xi + 1]]), PolyMatrix([[xi + 1]]))
	with pytest.raises(NotMinimalError):
		unimodular_completion(PolyMatrix([[1]]), PolyMatrix([[0]]))


def test_unimodular_completion_mimo_warns():
	P = PolyMatrix([[xi + 1, 0], [0, xi + 2]])
	N = PolyMatrix([[1], [1]])
	with pytest.warns(ExperimentalWarning):
		U = unimodular_completion(N, P)
	assert PolyMatrix.hstack(N, P) * U == PolyMatrix([[1, 0, 0], [0, 1, 0]])
	assert is_unimodular(U)


unimodulars = [ (PolyMatrix([[1, -(xi + 1)], [0, 1]]), True),
				(PolyMatrix([[xi, 0], [0, 1]]), False),
				(PolyMatrix.identity(4), True) ]

@pytest.mark.parametrize("U,expected", unimodulars)
def test_is_unimodular(U, expected):
	assert is_unimodular(U) is expected


def test_is_unimodular_non_square():
	with pytest.raises(DimensionError):
		is_unimodular(PolyMatrix([[1, 2]]))


controllables = [ (xi + 1, Polynomial(1), True),
				(xi + 1, xi + 1, False),
				(Polynomial(1), Polynomial(), True) ]

@pytest.mark.parametrize("P,N,expected", controllables)
def test_controllability_check(P, N, expected):
	assert controllability_check(PolyMatrix([[P]]), PolyMatrix([[N]])) is expected


def test_controllability_report_minors():
	report = controllability_report(PolyMatrix([[xi + 1]]), PolyMatrix([[1]]))
	assert set(report["minors"]) == {xi + 1, Polynomial(-1)}
	assert report["gcd"] == 1
	with pytest.raises(NotMinimalError):
		controllability_report(PolyMatrix([[0]]), PolyMatrix([[0]]))


def test_is_proper():
	assert is_proper(PolyMatrix([[xi + 1]]), PolyMatrix([[1]]))
	assert is_proper(PolyMatrix([[xi + 1]]), PolyMatrix([[xi]]))
	assert not is_proper(PolyMatrix([[xi + 1]]), PolyMatrix([[xi ** 2]]))


def test_det_matches_sympy():
	rng = np.random.default_rng(7)
	for _ in range(20):
		n = int(rng.integers(1, 4))
		M = random_matrix(rng, n, n)
		S, s = to_sympy(M)
		assert M.det() == from_sympy(S.det(), s)


""" Randomized property suites, 500 instances each """
def test_bezout_identity_exact():
	rng = np.random.default_rng(11)
	for _ in range(500):
		p, q = random_poly(rng, 8), random_poly(rng, 8)
		if p.is_zero() and q.is_zero():
			continue
		g, alpha, beta = ext_gcd(p, q)
		assert alpha * p + beta * q - g == Polynomial()
		assert g.lead == 1
		assert (p % g).is_zero() and (q % g).is_zero()


def test_adjoint_involution_and_antihomomorphism():
	rng = np.random.default_rng(12)
	for _ in range(500):
		r, k, c = (int(x) for x in rng.integers(1, 4, size=3))
		A, B = random_matrix(rng, r, k), random_matrix(rng, k, c)
		assert adjoint(adjoint(A)) == A
		assert adjoint(A * B) == adjoint(B) * adjoint(A)


def test_unimodular_completion_postcondition():
	rng = np.random.default_rng(13)
	done = 0
	while done < 500:
		P = random_poly(rng, 3) + Polynomial.monomial(int(rng.integers(0, 4)), 1)
		N = random_poly(rng, 3)
		if P.is_zero() or (N.is_zero() and P.degree > 0):
			continue
		Pm, Nm = PolyMatrix([[P]]), PolyMatrix([[N]])
		if not controllability_check(Pm, Nm):
			with pytest.raises(NotCoprimeError):
				unimodular_completion(Nm, Pm)
			continue
		U = unimodular_completion(Nm, Pm)
		assert PolyMatrix([[N, P]]) * U == PolyMatrix([[1, 0]])
		assert is_unimodular(U)
		done += 1


def test_mimo_completion_postcondition():
	rng = np.random.default_rng(14)
	done = 0
	while done < 200:
		P, N = random_matrix(rng, 2, 2, 1), random_matrix(rng, 2, 1, 1)
		if P.det().is_zero():
			continue
		with warnings.catch_warnings():
			warnings.simplefilter("ignore", ExperimentalWarning)
			if not controllability_check(P, N):
				with pytest.raises(NotCoprimeError):
					unimodular_completion(N, P)
				continue
			U = unimodular_completion(N, P)
		assert PolyMatrix.hstack(N, P) * U == PolyMatrix([[1, 0, 0], [0, 1, 0]])
		assert is_unimodular(U)
		done += 1


def test_completion_with_several_inputs():
	rng = np.random.default_rng(15)
	done = 0
	while done < 200:
		P, N = PolyMatrix([[random_poly(rng, 1) + xi]]), random_matrix(rng, 1, 2, 1)
		if P.det().is_zero():
			continue
		if not controllability_check(P, N):
			with pytest.raises(NotCoprimeError):
				unimodular_completion(N, P)
			continue
		U = unimodular_completion(N, P)
		assert U.shape == (3, 3)
		assert PolyMatrix.hstack(N, P) * U == PolyMatrix([[1, 0, 0]])
		assert is_unimodular(U)
		blocks = partition_completion(U, 1)
		assert blocks["U12"].shape == (2, 2) and blocks["U22"].shape == (1, 2)
		assert N * blocks["U12"] + P * blocks["U22"] == PolyMatrix([[0, 0]])
		done += 1
