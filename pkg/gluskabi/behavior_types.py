"""
Types, equation errors and Sobolev norms.

A type is the kernel of an operator ``Op``; for a trajectory ``w`` the
equation error ``e = Op w`` measures how far ``w`` is from the type, and the
Sobolev norm ``Σ ρ_i ‖Dⁱe‖²`` is the cost a raccordation minimizes.
"""
import math
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.integrate import simpson

from .exceptions import (DimensionError, NotAMemberError, SchemaError,
                         SingularWronskianError, UnsupportedOperatorError)
from .odesolve import ORACLE_SEGMENTS, DiscretizedFunctional, SplineSpace, Trajectory
from .polyops import PolyMatrix, Polynomial, as_rational

QUAD_POINTS = 2001
SCHUR_COND_MAX = 1e12
MEMBER_TOL = 1e-8


""" Type operators and norms """
@dataclass(frozen=True)
class TypeOperator:
    """
    An operator whose kernel is a type.

    ``kind == "linear"``: ``op`` is a Polynomial in ``D`` applied to every
    component. ``kind == "ltid_wronskian"``: the generalized-Wronskian
    operator of the linear time-invariant differential type with ``n`` and ``k``.
    """
    kind: str
    op: Optional[Polynomial] = None
    n: int = 0
    k: int = 1
    name: str = ""

    def __post_init__(self):
        if self.kind == "linear":
            if self.op is None or self.op.is_zero():
                raise SchemaError("a linear type needs a nonzero operator polynomial")
        elif self.kind == "ltid_wronskian":
            if self.n < 1 or self.k < 1:
                raise SchemaError(f"LTID type needs n >= 1 and k >= 1, got n={self.n}, k={self.k}")
        else:
            raise SchemaError(f"unknown type kind {self.kind!r}")

    @property
    def op_poly(self):
        return PolyMatrix.scalar(self.op) if self.kind == "linear" else None

    @property
    def is_linear(self):
        return self.kind == "linear"

    @property
    def required_order(self):
        """Highest derivative the operator reads."""
        if self.is_linear:
            return self.op.degree
        return self.n + self.n * self.k + self.k - 1

    def __str__(self):
        if self.is_linear:
            return f"{self.name or 'linear'}: {self.op}"
        return f"{self.name or 'ltid'}: L^{self.k}_{self.n} Wronskian"


@dataclass(frozen=True)
class SobolevNorm:
    """
    ``‖e‖² = Σ ρ_i ∫_a^b (Dⁱe)² dt``; as an operator ``Q = Σ ρ_i (−D²)^i``.

    The zero norm is only built through :meth:`zero`.
    """
    weights: tuple
    interval: tuple
    zero_norm: bool = False

    def __post_init__(self):
        w = tuple(as_rational(r) for r in self.weights)
        object.__setattr__(self, "weights", w)
        a, b = (float(x) for x in self.interval)
        object.__setattr__(self, "interval", (a, b))
        if not a < b:
            raise SchemaError(f"empty interval [{a}, {b}]")
        if any(r < 0 for r in w):
            raise SchemaError("Sobolev weights must be nonnegative")
        if not self.zero_norm and not any(r > 0 for r in w):
            raise SchemaError("a Sobolev norm needs a positive weight; use SobolevNorm.zero for the zero norm")

    @classmethod
    def zero(cls, interval):
        return cls((), interval, zero_norm=True)

    @classmethod
    def l2(cls, interval):
        return cls((1,), interval)

    @property
    def is_zero(self):
        return self.zero_norm or not any(self.weights)

    @property
    def order(self):
        """Highest derivative with a positive weight (-1 for the zero norm)."""
        return max((i for i, r in enumerate(self.weights) if r > 0), default=-1)

    @property
    def q_poly(self):
        """``Σ ρ_i (−ξ²)^i``."""
        minus_xi2 = Polynomial([0, 0, -1])
        return sum((r * minus_xi2 ** i for i, r in enumerate(self.weights)), Polynomial())


def sobolev_norm(k, interval):
    """Unit weights ``ρ_0 = … = ρ_k = 1``."""
    if k < 0:
        raise SchemaError(f"Sobolev order must be nonnegative, got {k}")
    return SobolevNorm((1,) * (k + 1), interval)


""" Jets """
@dataclass(frozen=True, eq=False)
class Jet:
    """Derivatives at time ``t``: ``values[i, j]`` is the i-th derivative of component j."""
    t: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "t", float(self.t))

    @property
    def depth(self):
        return self.values.shape[0]

    @property
    def ncomp(self):
        return self.values.shape[1]


def jet_of(w, t, depth):
    """Jet of a trajectory or closed-form signal at ``t``."""
    values = np.stack([np.asarray(w.derivative(np.array([t]), i) if not isinstance(w, Trajectory)
                                  else w.derivative(i, np.array([t]))).reshape(-1)
                       for i in range(depth)])
    return Jet(t, values)


""" Closed-form type members """
class Signal():
    """A scalar signal with analytic derivatives; subclasses define ``_derivative``."""
    ncomp = 1

    def derivative(self, t, order):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.asarray(self._derivative(t, order), dtype=float).reshape(len(t), 1)

    def __call__(self, t):
        return self.derivative(t, 0)[:, 0]

    def jet(self, t, depth):
        return jet_of(self, t, depth)

    def trajectory(self, interval, n=QUAD_POINTS):
        return Trajectory.from_closed_form(self, np.linspace(*interval, n))


class Constant(Signal):
    def __init__(self, c):
        self.c = float(c)

    def _derivative(self, t, order):
        return np.full(len(t), self.c if order == 0 else 0.0)


class Exponential(Signal):
    """``c e^{rate t}``"""
    def __init__(self, c, rate):
        self.c = float(c)
        self.rate = float(rate)

    def _derivative(self, t, order):
        return self.c * self.rate ** order * np.exp(self.rate * t)


class PolynomialSignal(Signal):
    def __init__(self, coeffs):
        self.coeffs = [float(c) for c in coeffs] or [0.0]

    def _derivative(self, t, order):
        p = np.polynomial.Polynomial(self.coeffs).deriv(order)
        return p(t)


class HarmonicSum(Signal):
    """``offset + Σ_m a_m cos(m ω t) + b_m sin(m ω t)``"""
    def __init__(self, omega, offset=0.0, terms=()):
        if omega <= 0:
            raise SchemaError(f"harmonic frequency must be positive, got {omega}")
        self.omega = float(omega)
        self.offset = float(offset)
        self.terms = [(int(m), float(a), float(b)) for m, a, b in terms]

    def _derivative(self, t, order):
        out = np.full(len(t), self.offset if order == 0 else 0.0)
        shift = order * np.pi / 2
        for m, a, b in self.terms:
            f = m * self.omega
            out = out + f ** order * (a * np.cos(f * t + shift) + b * np.sin(f * t + shift))
        return out


class JetSignal(Signal):
    """Raw boundary jet, extended off its point by the Taylor polynomial."""
    def __init__(self, t0, values):
        self.t0 = float(t0)
        self.values = [float(v) for v in values]

    def _derivative(self, t, order):
        out = np.zeros(len(t))
        tau = t - self.t0
        for i in range(order, len(self.values)):
            out = out + self.values[i] * tau ** (i - order) / math.factorial(i - order)
        return out


class VectorSignal():
    """Componentwise stack of scalar signals."""
    def __init__(self, components):
        self.components = list(components)
        self.ncomp = len(self.components)

    def derivative(self, t, order):
        return np.hstack([c.derivative(t, order) for c in self.components])

    def jet(self, t, depth):
        return jet_of(self, t, depth)

    def trajectory(self, interval, n=QUAD_POINTS):
        return Trajectory.from_closed_form(self, np.linspace(*interval, n))


def make_signal(entry, at=None):
    """
    Signal from its problem-file form: ``{"constant": c}``,
    ``{"exponential": {"c", "rate"}}``, ``{"polynomial": [...]}``,
    ``{"harmonic": {"omega", "offset", "terms"}}``, ``{"jet": [...]}``
    (``at`` is then the jet's time) or a list of these for vector signals.
    """
    if isinstance(entry, list):
        return VectorSignal([make_signal(s, at) for s in entry])
    if not isinstance(entry, dict) or len(entry) != 1:
        raise SchemaError(f"a signal is a one-key object, got {entry!r}")
    (key, val), = entry.items()
    try:
        if key == "constant":
            return Constant(float(as_rational(val)))
        if key == "exponential":
            return Exponential(float(as_rational(val["c"])), float(as_rational(val["rate"])))
        if key == "polynomial":
            return PolynomialSignal([float(as_rational(c)) for c in val])
        if key == "harmonic":
            return HarmonicSum(float(as_rational(val["omega"])), float(as_rational(val.get("offset", 0))),
                               val.get("terms", ()))
        if key == "jet":
            if at is None:
                raise SchemaError("a raw jet needs the time it was taken at")
            return JetSignal(at, [float(as_rational(v)) for v in val])
    except (KeyError, TypeError) as err:
        raise SchemaError(f"malformed {key!r} signal: {err}")
    raise SchemaError(f"unknown signal generator {key!r}")


def member_from_jet(jet):
    """The exponential-family member ``w e^{λ(t−t₀)}``, ``λ = ẇ/w``, through a jet."""
    w, v = jet.values[0, 0], jet.values[1, 0]
    if w == 0:
        raise NotAMemberError("the exponential family has no member through w = 0 with this jet", t=jet.t)
    rate = v / w
    return Exponential(w * np.exp(-rate * jet.t), rate)


""" Builtin types """
def make_builtin_type(name, **params):
    """
    The type operator for a builtin family.

    ``constants()``; ``polynomials(degree)``; ``exponential_family()``;
    ``exponential_rate(rate)``; ``ltid(n, k)``; ``periodic_trunc(omega, terms)``;
    ``linear(coeffs)`` for an arbitrary operator polynomial.
    """
    def need(key, cast=int):
        if key not in params:
            raise SchemaError(f"type {name!r} needs parameter {key!r}")
        try:
            return cast(params[key])
        except (TypeError, ValueError):
            raise SchemaError(f"invalid {key!r} for type {name!r}: {params[key]!r}")

    if name == "constants":
        return TypeOperator("linear", Polynomial.xi(), name=name)
    if name == "polynomials":
        d = need("degree")
        if d < 0:
            raise SchemaError(f"polynomial degree must be nonnegative, got {d}")
        return TypeOperator("linear", Polynomial.monomial(d + 1), name=name)
    if name == "exponential_family":
        return TypeOperator("ltid_wronskian", n=1, k=1, name=name)
    if name == "exponential_rate":
        rate = need("rate", as_rational)
        return TypeOperator("linear", Polynomial([-rate, 1]), name=name)
    if name == "ltid":
        n, k = need("n"), need("k")
        return TypeOperator("ltid_wronskian", n=n, k=k, name=name)
    if name == "periodic_trunc":
        omega, terms = need("omega", as_rational), need("terms")
        if omega <= 0 or terms < 1:
            raise SchemaError(f"periodic_trunc needs omega > 0 and terms >= 1, got {omega}, {terms}")
        op = Polynomial.xi()
        for m in range(1, terms + 1):
            op = op * Polynomial([1, 0, 1 / (m * m * omega * omega)])
        return TypeOperator("linear", op, name=name)
    if name == "linear":
        coeffs = need("coeffs", list)
        return TypeOperator("linear", Polynomial(coeffs), name=name)
    raise SchemaError(f"unknown type {name!r}")


""" Equation errors """
def _wronskian_blocks(derivs, n, k):
    """
    Generalized Wronskian blocks from stacked derivatives ``(depth, npts, k)``.

    Row ``j`` of ``Ŵ`` is ``[w^{(j)}ᵀ … w^{(n−1+j)}ᵀ]``, row ``j`` of ``W̃``
    is ``w^{(n+j)}ᵀ`` (``j < nk``); the border rows continue the pattern for
    ``j = nk … nk+k−1``.
    """
    nk = n * k
    npts = derivs.shape[1]
    What = np.empty((npts, nk, nk))
    Wtil = np.empty((npts, nk, k))
    BL = np.empty((npts, k, nk))
    BR = np.empty((npts, k, k))
    for j in range(nk):
        for i in range(n):
            What[:, j, i * k:(i + 1) * k] = derivs[i + j]
        Wtil[:, j, :] = derivs[n + j]
    for r in range(k):
        for i in range(n):
            BL[:, r, i * k:(i + 1) * k] = derivs[i + nk + r]
        BR[:, r, :] = derivs[n + nk + r]
    return What, Wtil, BL, BR


def ltid_residual_grid(derivs, n, k, mode="det", cond_max=SCHUR_COND_MAX):
    """
    LTID residual and its term scale at every point, both shaped ``(npts, k, k)``.

    ``mode="det"`` gives ``det(Ŵ)`` times the Schur complement as bordered
    determinants, and the scale is the Laplace expansion of each along its
    border row with absolute values. ``mode="schur"`` gives the Schur
    complement itself and refuses points where ``cond(Ŵ) > cond_max``.
    """
    derivs = np.asarray(derivs, dtype=float)
    if derivs.ndim == 2:
        derivs = derivs[:, :, None]
    need = n + n * k + k
    if derivs.shape[0] < need or derivs.shape[2] != k:
        raise DimensionError(f"L^{k}_{n} needs {need} derivatives of {k} components, "
                             f"got {derivs.shape[0]} of {derivs.shape[2]}")
    What, Wtil, BL, BR = _wronskian_blocks(derivs, n, k)
    nk, npts = n * k, derivs.shape[1]
    if mode == "schur":
        cond = np.linalg.cond(What)
        bad = ~(cond <= cond_max)
        if np.any(bad):
            raise SingularWronskianError("the Wronskian is numerically singular",
                                         points=int(np.sum(bad)), worst_condition=float(np.max(cond)))
        X = np.linalg.solve(What, Wtil)
        return BR - BL @ X, np.abs(BR) + np.abs(BL) @ np.abs(X)
    if mode != "det":
        raise SchemaError(f"unknown LTID residual mode {mode!r}")
    res = np.empty((npts, k, k))
    scale = np.empty((npts, k, k))
    for r in range(k):
        for c in range(k):
            B = np.empty((npts, nk + 1, nk + 1))
            B[:, :nk, :nk] = What
            B[:, :nk, nk] = Wtil[:, :, c]
            B[:, nk, :nk] = BL[:, r, :]
            B[:, nk, nk] = BR[:, r, c]
            res[:, r, c] = np.linalg.det(B)
            acc = np.zeros(npts)
            for m in range(nk + 1):
                minor = np.delete(B[:, :nk, :], m, axis=2)
                acc += np.abs(B[:, nk, m] * np.linalg.det(minor))
            scale[:, r, c] = acc
    return res, scale


def ltid_residual(jet, n, k, mode="det"):
    """The ``k x k`` LTID residual at one jet."""
    derivs = jet.values[:, None, :]
    return ltid_residual_grid(derivs, n, k, mode)[0][0]


def _linear_terms(op, derivs):
    terms = [float(c) * derivs[i] for i, c in enumerate(op.coeffs) if c != 0]
    return sum(terms), sum(np.abs(t) for t in terms)


def residual(T, jet, mode="det"):
    """Equation error ``Op w`` at the jet's time, as a flat vector."""
    if jet.depth < T.required_order + 1:
        raise DimensionError(f"{T} needs {T.required_order + 1} derivatives, the jet has {jet.depth}")
    if T.is_linear:
        return np.atleast_1d(_linear_terms(T.op, jet.values)[0])
    return ltid_residual(jet, T.n, T.k, mode).ravel()


def residual_with_scale(T, derivs, mode="det"):
    """Residual and term scale on a grid of stacked derivatives ``(depth, npts, ncomp)``."""
    if T.is_linear:
        e, s = _linear_terms(T.op, derivs)
        return e, s
    e, s = ltid_residual_grid(derivs, T.n, T.k, mode)
    return e.reshape(len(e), -1), s.reshape(len(s), -1)


def check_member(T, jet, tol=MEMBER_TOL, label="boundary data"):
    """Raise NotAMemberError unless ``|Op w| <= tol * max(1, scale)`` at the jet."""
    e, s = residual_with_scale(T, jet.values[:T.required_order + 1, None, :])
    bound = tol * max(1.0, float(np.max(s)))
    worst = float(np.max(np.abs(e)))
    if worst > bound:
        raise NotAMemberError(f"{label} at t={jet.t:g} is not a member of {T}",
                              residual=worst, bound=bound)
    return worst


def equation_error(T, w, mode="det"):
    """The equation-error signal ``e = Op w`` of a trajectory, on the trajectory's grid."""
    if T.is_linear:
        return w.apply(T.op)
    e, scale = residual_with_scale(T, w.derivatives(T.required_order + 1), mode)
    return Trajectory(w.grid, e, report={"scale": float(np.max(scale))})


def membership_report(T, w, mode="det"):
    """
    Max equation error of a trajectory over its grid, absolute and relative
    to the largest term magnitude (at least 1).
    """
    e, s = residual_with_scale(T, w.derivatives(T.required_order + 1), mode)
    worst = float(np.max(np.abs(e)))
    scale = float(np.max(s))
    return {"max_residual": worst, "scale": scale,
            "relative": worst / max(1.0, scale),
            "points": int(len(w.grid))}


class LinearizedOperator():
    """``Σ a_i(t) Dⁱ`` with coefficient samples on a grid."""
    def __init__(self, coeffs, text):
        self.coeffs = [np.asarray(c, dtype=float) for c in coeffs]
        self.text = text

    def apply(self, h):
        return Trajectory(h.grid, sum(a[:, None] * h.derivative(i) for i, a in enumerate(self.coeffs)))

    def __str__(self):
        return self.text


def linearize(T, w):
    """
    Gâteaux derivative of ``Op`` about ``w``: ``Op`` itself when linear,
    ``w D² − 2ẇ D + ẅ I`` for the exponential family.
    """
    if T.is_linear:
        return T.op
    if (T.n, T.k) != (1, 1):
        raise UnsupportedOperatorError(f"no linearization of L^{T.k}_{T.n} beyond the exponential family")
    d = w.derivatives(3)[:, :, 0]
    return LinearizedOperator([d[2], -2 * d[1], d[0]], "wD² − 2ẇD + ẅI")


""" Costs """
def sobolev_cost(e, Q, n_points=QUAD_POINTS, verbose=False):
    """
    ``Σ ρ_i ∫_a^b (Dⁱe)² dt`` by composite Simpson, summed over components.

    Closed-form ``e`` is resampled on ``n_points`` and differentiated exactly;
    sampled ``e`` is integrated on its own grid with finite-difference
    derivatives.
    """
    if Q.is_zero:
        return 0.0
    a, b = Q.interval
    ea, eb = e.interval
    tol = 1e-12 * max(1.0, abs(a), abs(b))
    if abs(ea - a) > tol or abs(eb - b) > tol:
        raise SchemaError(f"signal lives on [{ea}, {eb}], the norm on [{a}, {b}]")
    if e.is_exact():
        e = e.resample(n_points)
    total = 0.0
    for i, rho in enumerate(Q.weights):
        if rho == 0:
            continue
        d = e.derivative(i)
        total += float(rho) * float(np.sum(simpson(d ** 2, x=e.grid, axis=0)))
    if verbose:
        sys.stdout.write(f"\tSobolev cost over {len(e.grid)} points: {total:.12g}\n")
    return total


def _product_rule_terms(i):
    """``Dⁱ(wẅ − ẇ²)`` as ``[(coef, p, q)]`` meaning ``Σ coef · w⁽ᵖ⁾ w⁽ᑫ⁾``."""
    terms = []
    for j in range(i + 1):
        c = math.comb(i, j)
        terms += [(c, j, i - j + 2), (-c, j + 1, i - j + 1)]
    return terms


def discretize_cost(T, Q, ncomp=1, segments=ORACLE_SEGMENTS):
    """
    The functional ``‖Op w‖²_Q`` over B-spline coefficients, with Gauss
    weights folded into the residual.

    Linear types give a quadratic functional; the exponential family gets
    its exact second derivatives so the descent takes Newton steps.
    """
    if Q.is_zero:
        raise SchemaError("a zero norm has no cost to minimize")
    pieces = [(i, math.sqrt(float(r))) for i, r in enumerate(Q.weights) if r > 0]
    if T.is_linear:
        space = SplineSpace.for_order(Q.interval, T.op.degree + Q.order, segments, ncomp)
        sw = np.sqrt(space.weights)[:, None]
        single = SplineSpace(Q.interval, segments, space.degree)
        A1 = np.vstack([s * sw * single.operator_rows(Polynomial.monomial(i) * T.op, space.nodes)
                        for i, s in pieces])
        return DiscretizedFunctional.quadratic(space, [scipy.linalg.block_diag(*[A1] * ncomp)])
    if (T.n, T.k) != (1, 1) or ncomp != 1:
        raise UnsupportedOperatorError("only the exponential family has a discretized nonlinear cost")
    space = SplineSpace.for_order(Q.interval, Q.order + 2, segments)
    sw = np.sqrt(space.weights)
    B = [space.design(space.nodes, d) for d in range(Q.order + 3)]
    blocks = [(s, _product_rule_terms(i)) for i, s in pieces]

    def res(x):
        v = [Bd @ x for Bd in B]
        return np.concatenate([s * sw * sum(c * v[p] * v[q] for c, p, q in terms) for s, terms in blocks])

    def jac(x):
        v = [Bd @ x for Bd in B]
        return np.vstack([s * sw[:, None] * sum(c * (v[q][:, None] * B[p] + v[p][:, None] * B[q])
                                                for c, p, q in terms)
                          for s, terms in blocks])

    def curvature(x, r):
        n = len(sw)
        out = np.zeros((space.n_unknowns, space.n_unknowns))
        for k, (s, terms) in enumerate(blocks):
            rw = s * sw * r[k * n:(k + 1) * n]
            for c, p, q in terms:
                half = B[p].T @ (rw[:, None] * B[q])
                out += c * (half + half.T)
        return out

    return DiscretizedFunctional(space, res, jac, curvature=curvature)
