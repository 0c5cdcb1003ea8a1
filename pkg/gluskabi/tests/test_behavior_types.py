import pytest
import numpy as np
import sympy
from scipy.integrate import simpson, trapezoid
from fractions import Fraction

from gluskabi.behavior_types import (SobolevNorm, Jet, make_builtin_type, make_signal,
	sobolev_norm, residual, ltid_residual, ltid_residual_grid, linearize, sobolev_cost,
	check_member, equation_error, membership_report, member_from_jet, Constant, Exponential,
	PolynomialSignal, HarmonicSum, VectorSignal)
from gluskabi.polyops import Polynomial
from gluskabi.exceptions import (SchemaError, DimensionError, NotAMemberError,
	SingularWronskianError, UnsupportedOperatorError)

xi = Polynomial.xi()
UNIT = (0.0, 1.0)


builtin_types = [ ("constants", {}, xi),
				("polynomials", {"degree": 2}, xi ** 3),
				("exponential_rate", {"rate": 2}, xi - 2),
				("periodic_trunc", {"omega": 2, "terms": 1}, xi + Polynomial.monomial(3, Fraction(1, 4))),
				("linear", {"coeffs": [1, 0, 1]}, xi ** 2 + 1) ]

@pytest.mark.parametrize("name,params,op", builtin_types)
def test_make_builtin_type(name, params, op):
	T = make_builtin_type(name, **params)
	assert T.is_linear
	assert T.op == op
	assert T.op_poly.to_scalar() == op


def test_periodic_trunc_two_pi():
	T = make_builtin_type("periodic_trunc", omega=2 * np.pi, terms=1)
	# ξ + ξ³/(4π²)
	assert T.op.degree == 3
	assert float(T.op[3]) == pytest.approx(1 / (4 * np.pi ** 2), rel=1e-12)
	assert T.op[1] == 1 and T.op[0] == 0 and T.op[2] == 0


def test_make_builtin_type_nonlinear():
	T = make_builtin_type("exponential_family")
	assert not T.is_linear
	assert (T.n, T.k) == (1, 1)
	assert T.required_order == 2
	assert make_builtin_type("ltid", n=2, k=1).required_order == 4


bad_types = [ ("unknown", {}),
			("polynomials", {}),
			("polynomials", {"degree": -1}),
			("periodic_trunc", {"omega": 0, "terms": 1}),
			("ltid", {"n": 0, "k": 1}) ]

@pytest.mark.parametrize("name,params", bad_types)
def test_make_builtin_type_errors(name, params):
	with pytest.raises(SchemaError):
		make_builtin_type(name, **params)


def test_sobolev_norm():
	Q = sobolev_norm(1, UNIT)
	assert Q.weights == (1, 1)
	assert Q.q_poly == Polynomial([1, 0, -1])
	assert Q.order == 1
	assert SobolevNorm.zero(UNIT).is_zero
	assert SobolevNorm.zero(UNIT).order == -1
	with pytest.raises(SchemaError):
		SobolevNorm((0,), UNIT)
	with pytest.raises(SchemaError):
		SobolevNorm((1, -1), UNIT)
	with pytest.raises(SchemaError):
		SobolevNorm((1,), (1.0, 1.0))


def test_make_signal():
	assert isinstance(make_signal({"constant": "1/2"}), Constant)
	assert make_signal({"constant": "1/2"})(np.array([3.0]))[0] == 0.5
	e = make_signal({"exponential": {"c": 5, "rate": -2}})
	assert e.derivative([0.0], 2)[0, 0] == pytest.approx(20.0)
	h = make_signal({"harmonic": {"omega": 1, "offset": 1, "terms": [[1, 0, 1]]}})
	assert h.derivative([0.0], 1)[0, 0] == pytest.approx(1.0)
	j = make_signal({"jet": [1, 2, 6]}, at=1.0)
	assert j.derivative([1.0], 2)[0, 0] == pytest.approx(6.0)
	v = make_signal([{"constant": 1}, {"polynomial": [0, 1]}])
	assert v.ncomp == 2
	assert v.derivative([2.0], 0).tolist() == [[1.0, 2.0]]
	with pytest.raises(SchemaError):
		make_signal({"jet": [1, 2]})
	with pytest.raises(SchemaError):
		make_signal({"spline": [1, 2]})
	with pytest.raises(SchemaError):
		make_signal({"exponential": {"c": 1}})


def test_harmonic_sum_derivatives_match_sympy():
	t = sympy.Symbol("t")
	expr = 1 + 2 * sympy.cos(3 * t) - sympy.sin(6 * t)
	h = HarmonicSum(3, 1, [(1, 2, 0), (2, 0, -1)])
	for order in range(5):
		want = float(sympy.diff(expr, t, order).subs(t, 0.3))
		assert h.derivative([0.3], order)[0, 0] == pytest.approx(want, rel=1e-12, abs=1e-9)


residuals = [ ("constants", {}, Constant(3.0), 0.7, 0.0),
			("exponential_family", {}, Exponential(1, 2), 0.0, 0.0),
			("exponential_family", {}, PolynomialSignal([0, 1]), 1.0, -1.0) ]

@pytest.mark.parametrize("name,params,w,t,expected", residuals)
def test_residual(name, params, w, t, expected):
	T = make_builtin_type(name, **params)
	jet = w.jet(t, T.required_order + 1)
	assert residual(T, jet)[0] == pytest.approx(expected, abs=1e-12)


def test_residual_needs_derivatives():
	T = make_builtin_type("exponential_family")
	with pytest.raises(DimensionError):
		residual(T, Jet(0.0, [1.0, 2.0]))


def test_ltid_residual_exponential():
	jet = Exponential(1, 2).jet(0.4, 3)
	assert ltid_residual(jet, 1, 1)[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_ltid_residual_sine_member():
	jet = Jet(0.0, [0.0, 1.0, 0.0, -1.0, 0.0])
	assert ltid_residual(jet, 2, 1)[0, 0] == pytest.approx(0.0, abs=1e-14)


def test_ltid_residual_cubic_against_sympy():
	jet = Jet(1.0, [1.0, 3.0, 6.0, 6.0, 0.0])
	oracle = float(sympy.Matrix([[1, 3, 6], [3, 6, 6], [6, 6, 0]]).det())
	assert oracle == -36.0
	assert ltid_residual(jet, 2, 1)[0, 0] == pytest.approx(oracle, rel=1e-12)


def test_ltid_residual_schur_mode():
	jet = Exponential(2, -1).jet(0.5, 3)
	assert ltid_residual(jet, 1, 1, mode="schur")[0, 0] == pytest.approx(0.0, abs=1e-12)
	with pytest.raises(SingularWronskianError):
		ltid_residual(Jet(0.0, [0.0, 0.0, 1.0]), 1, 1, mode="schur")
	with pytest.raises(SchemaError):
		ltid_residual(jet, 1, 1, mode="qr")


def test_ltid_residual_vector_member():
	# w = (e^t, e^{2t}) solves a first order system in two variables
	rates = np.array([1.0, 2.0])
	derivs = np.stack([rates ** d * np.exp(rates * 0.3) for d in range(5)])[:, None, :]
	res, scale = ltid_residual_grid(derivs, 1, 2)
	assert res.shape == (1, 2, 2)
	assert np.all(np.abs(res) <= 1e-10 * scale)


def _ltid_derivs(coeffs, roots, t, depth):
	return np.stack([sum(c * r ** d * np.exp(r * t) for c, r in zip(coeffs, roots)) for d in range(depth)])


def test_ltid_membership_suite():
	rng = np.random.default_rng(6)
	pool = np.array([-1.5, -0.9, -0.3, 0.3, 0.9, 1.5])
	t = np.linspace(0, 1, 201)
	for _ in range(20):
		n = int(rng.integers(1, 4))
		roots = rng.choice(pool, size=n + 1, replace=False)
		coeffs = rng.uniform(1.0, 2.0, size=n + 1) * rng.choice([-1, 1], size=n + 1)
		depth = 2 * n + 1
		member = _ltid_derivs(coeffs[:n], roots[:n], t, depth)
		res, scale = ltid_residual_grid(member, n, 1)
		assert np.all(np.abs(res) <= 1e-6 * scale)
		# one extra mode takes the signal out of the order-n class
		outsider = _ltid_derivs(coeffs, roots, t, depth)
		res, scale = ltid_residual_grid(outsider, n, 1)
		assert np.max(np.abs(res) / scale) > 1e-3


def test_check_member():
	T = make_builtin_type("constants")
	assert check_member(T, Constant(2).jet(0, 2)) == 0.0
	with pytest.raises(NotAMemberError):
		check_member(T, PolynomialSignal([0, 1]).jet(0, 2))


def test_member_from_jet():
	jet = Exponential(5, -2).jet(0.0, 2)
	w = member_from_jet(jet)
	assert w.derivative([1.0], 0)[0, 0] == pytest.approx(5 * np.exp(-2))
	with pytest.raises(NotAMemberError):
		member_from_jet(Jet(0.0, [0.0, 1.0]))


def test_linearize():
	assert linearize(make_builtin_type("constants"), None) == xi
	assert linearize(make_builtin_type("polynomials", degree=2), None) == xi ** 3
	w = Exponential(1, 1).trajectory(UNIT, 101)
	L = linearize(make_builtin_type("exponential_family"), w)
	assert str(L) == "wD² − 2ẇD + ẅI"
	# Op_w w = w ẅ − 2ẇ² + ẅ w = 2 Op w, zero on a member
	assert np.max(np.abs(L.apply(w).samples)) == pytest.approx(0.0, abs=1e-10)
	with pytest.raises(UnsupportedOperatorError):
		linearize(make_builtin_type("ltid", n=2, k=1), w)


costs = [ (Constant(0), (1,), 0.0),
		(Constant(1), (1,), 1.0),
		(PolynomialSignal([0, 1]), (1, 1), 4 / 3) ]

@pytest.mark.parametrize("e,weights,expected", costs)
def test_sobolev_cost(e, weights, expected):
	Q = SobolevNorm(weights, UNIT)
	assert sobolev_cost(e.trajectory(UNIT), Q) == pytest.approx(expected, abs=1e-10)


def test_sobolev_cost_matches_trapezoid():
	e = HarmonicSum(2, 0.5, [(1, 1, 0.3)]).trajectory(UNIT, 20001)
	trap = float(trapezoid(e.samples[:, 0] ** 2, x=e.grid))
	assert sobolev_cost(e, SobolevNorm.l2(UNIT)) == pytest.approx(trap, rel=1e-8)


def test_sobolev_cost_interval_mismatch():
	with pytest.raises(SchemaError):
		sobolev_cost(Constant(1).trajectory((0, 2)), SobolevNorm.l2(UNIT))


def test_sobolev_cost_vector_sums_components():
	v = VectorSignal([Constant(1), Constant(2)]).trajectory(UNIT)
	assert sobolev_cost(v, SobolevNorm.l2(UNIT)) == pytest.approx(5.0, rel=1e-12)


def test_equation_error_and_membership_report():
	T = make_builtin_type("exponential_family")
	w = PolynomialSignal([1, 1]).trajectory(UNIT, 101)
	e = equation_error(T, w)
	assert np.allclose(e.samples[:, 0], -1.0)
	report = membership_report(T, w)
	assert report["max_residual"] == pytest.approx(1.0)
	assert report["points"] == 101
	member = membership_report(T, Exponential(2, 0.5).trajectory(UNIT, 101))
	assert member["relative"] <= 1e-12


def test_members_have_zero_residual():
	t = np.linspace(0, 1, 11)
	cases = [ (make_builtin_type("constants"), Constant(-4)),
			(make_builtin_type("polynomials", degree=2), PolynomialSignal([1, -2, 3])),
			(make_builtin_type("exponential_family"), Exponential(0.3, 1.7)),
			(make_builtin_type("periodic_trunc", omega=3, terms=2), HarmonicSum(3, 1, [(1, 1, 2), (2, -1, 0.5)])) ]
	for T, w in cases:
		for s in t:
			jet = w.jet(s, T.required_order + 1)
			e = residual(T, jet)
			scale = max(1.0, float(np.max(np.abs(jet.values))))
			assert np.max(np.abs(e)) <= 1e-9 * scale


def test_adjoint_identity_by_quadrature():
	rng = np.random.default_rng(8)
	a, b = 0.0, 1.0
	t = np.linspace(a, b, 4001)
	bump = np.polynomial.Polynomial([-a, 1]) ** 4 * np.polynomial.Polynomial([b, -1]) ** 4
	for _ in range(50):
		L = Polynomial([Fraction(int(c), 2) for c in rng.integers(-4, 5, size=int(rng.integers(1, 5)))])
		if L.is_zero():
			continue
		w = np.polynomial.Polynomial(rng.uniform(-1, 1, size=6))
		v = bump * np.polynomial.Polynomial(rng.uniform(-1, 1, size=3))
		Lw = sum(float(c) * w.deriv(d)(t) for d, c in enumerate(L.coeffs))
		Lsv = sum(float(c) * v.deriv(d)(t) for d, c in enumerate(L.adjoint().coeffs))
		gap = abs(simpson(Lw * v(t), x=t) - simpson(w(t) * Lsv, x=t))
		assert gap <= 1e-6
