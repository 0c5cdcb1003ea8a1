"""
Raccordations between two members of a type.

The raccordation on ``[a, b]`` minimizes ``‖Op w‖²_Q`` with the derivatives
``0 .. m+k-1`` of ``w`` pinned to those of the left member at ``a`` and of the
right member at ``b`` (``m`` the operator order, ``k`` the Sobolev order).
Stationary points satisfy ``Op_w* Q Op w = 0``.
"""
import sys
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd

from .behavior_types import (Jet, check_member, discretize_cost, equation_error,
                             member_from_jet, sobolev_cost)
from .exceptions import (DimensionError, ExperimentalWarning, SchemaError, SignChangeWarning,
                         UnsupportedOperatorError)
from .odesolve import (BVP_RESIDUAL_TOL, COLLOCATION_NODES, GRID_POINTS, ORACLE_SEGMENTS, BoundaryValue,
                       Condition, LinearBVP, Trajectory, char_roots, direct_minimize,
                       hermite_guess, log_hermite_guess, solve_linear_bvp,
                       solve_nonlinear_bvp)
from .polyops import Polynomial

EL_FORMS = ("derived", "printed")


@dataclass(frozen=True, eq=False)
class SignalProblem:
    """
    Type, norm and boundary jets of the two members.

    ``left`` is taken at ``a`` from the first member, ``right`` at ``b`` from
    the second; both need ``m + k`` derivatives (more if the type's own order
    demands it for the membership check).
    """
    type: object
    norm: object
    left: Jet
    right: Jet

    def __post_init__(self):
        a, b = self.norm.interval
        if abs(self.left.t - a) > 1e-12 * max(1.0, abs(a)) or abs(self.right.t - b) > 1e-12 * max(1.0, abs(b)):
            raise SchemaError(f"boundary jets at t={self.left.t:g}, {self.right.t:g} "
                              f"do not sit on the interval ends [{a:g}, {b:g}]")
        if self.left.ncomp != self.right.ncomp:
            raise DimensionError(f"left jet has {self.left.ncomp} components, right has {self.right.ncomp}")
        if not self.type.is_linear and self.left.ncomp != self.type.k:
            raise DimensionError(f"{self.type} acts on {self.type.k} components")
        for jet, side in ((self.left, "left"), (self.right, "right")):
            if jet.depth < self.jet_depth:
                raise DimensionError(f"{side} jet has {jet.depth} derivatives, {self.jet_depth} needed")
            check_member(self.type, jet, label=f"{side} boundary data")

    @classmethod
    def from_signals(cls, T, Q, w1, w2):
        a, b = Q.interval
        depth = required_depth(T, Q)
        return cls(T, Q, w1.jet(a, depth), w2.jet(b, depth))

    @property
    def interval(self):
        return self.norm.interval

    @property
    def bc_count(self):
        """Derivatives pinned at each end."""
        return self.type.required_order + max(self.norm.order, 0) if self.type.is_linear \
            else 2 + max(self.norm.order, 0)

    @property
    def jet_depth(self):
        return required_depth(self.type, self.norm)

    @property
    def ncomp(self):
        return self.left.ncomp

    def boundary_values(self):
        bcs = []
        for side, jet in (("a", self.left), ("b", self.right)):
            for i in range(self.bc_count):
                for j in range(self.ncomp):
                    bcs.append(BoundaryValue(side, i, float(jet.values[i, j]), j))
        return bcs


def required_depth(T, Q):
    m = T.required_order if T.is_linear else 2
    return max(m + max(Q.order, 0), T.required_order + 1)


@dataclass(frozen=True, eq=False)
class ELEquation:
    """
    Euler-Lagrange equation of a signal raccordation.

    Linear: ``poly`` (monic) and ``raw = adjoint(op) Q op``. Nonlinear:
    ``residual``, ``partials`` and ``scale`` act on stacked jets
    ``(order + 1, npts)``.
    """
    kind: str
    order: int
    poly: Optional[Polynomial] = None
    raw: Optional[Polynomial] = None
    form: str = ""
    text: str = ""
    residual: Optional[Callable] = field(default=None, repr=False)
    partials: Optional[Callable] = field(default=None, repr=False)
    scale: Optional[Callable] = field(default=None, repr=False)

    def __str__(self):
        return f"({self.poly}) w = 0" if self.kind == "linear" else f"{self.text} = 0"

    def to_dict(self):
        if self.kind == "linear":
            return {"kind": "linear", "order": self.order, "poly": str(self.poly),
                    "coeffs": [str(c) for c in self.poly.coeffs],
                    "raw_coeffs": [str(c) for c in self.raw.coeffs]}
        return {"kind": "nonlinear", "order": self.order, "form": self.form, "equation": self.text}


def derive_el_linear(T, Q):
    """``adjoint(op) · Σρ_i(−ξ²)^i · op``, stored monic."""
    if not T.is_linear:
        raise UnsupportedOperatorError(f"{T} is not linear")
    if Q.is_zero:
        raise SchemaError("the Euler-Lagrange equation of a zero norm is empty")
    raw = T.op.adjoint() * Q.q_poly * T.op
    return ELEquation("linear", raw.degree, poly=raw.monic(), raw=raw)


def _el_printed(j):
    w, w1, w2, w3, w4 = j[:5]
    return w4 * w * w + 2 * w3 * w1 * w - 3 * w2 * w1 * w1


def _el_printed_partials(j):
    w, w1, w2, w3, w4 = j[:5]
    return np.stack([2 * w4 * w + 2 * w3 * w1, 2 * w3 * w - 6 * w2 * w1, -3 * w1 * w1,
                     2 * w1 * w, w * w])


def _el_printed_scale(j):
    w, w1, w2, w3, w4 = np.abs(j[:5])
    return w4 * w * w + 2 * w3 * w1 * w + 3 * w2 * w1 * w1


def _el_derived(j):
    w, w1, w2, w3, w4 = j[:5]
    return w * w * w4 + 4 * w * w1 * w3 + 3 * w * w2 * w2 - 8 * w1 * w1 * w2


def _el_derived_partials(j):
    w, w1, w2, w3, w4 = j[:5]
    return np.stack([2 * w * w4 + 4 * w1 * w3 + 3 * w2 * w2, 4 * w * w3 - 16 * w1 * w2,
                     6 * w * w2 - 8 * w1 * w1, 4 * w * w1, w * w])


def _el_derived_scale(j):
    w, w1, w2, w3, w4 = np.abs(j[:5])
    return w * w * w4 + 4 * w * w1 * w3 + 3 * w * w2 * w2 + 8 * w1 * w1 * w2


def derive_el_L11(Q, form="derived"):
    """
    Euler-Lagrange equation of ``∫(wẅ − ẇ²)²`` (exponential family, L² norm).

    ``form="derived"`` is ``Op_w* Op w`` with the formal adjoint,
    ``w²w⁽⁴⁾ + 4wẇw⁽³⁾ + 3wẅ² − 8ẇ²ẅ``; ``form="printed"`` is the shorter
    ``w⁽⁴⁾w² + 2w⁽³⁾ẇw − 3ẅẇ²``. Both vanish on ``ce^{λt}``, only the derived
    one is satisfied by the minimizers.
    """
    if Q.is_zero or Q.order != 0:
        raise UnsupportedOperatorError("the exponential-family Euler-Lagrange equation needs a plain L² norm")
    if form == "derived":
        return ELEquation("nonlinear", 4, form=form, text="w²w⁽⁴⁾ + 4wẇw⁽³⁾ + 3wẅ² − 8ẇ²ẅ",
                          residual=_el_derived, partials=_el_derived_partials, scale=_el_derived_scale)
    if form == "printed":
        warnings.warn("the printed exponential-family EL form is not the stationarity condition "
                      "of the cost", ExperimentalWarning)
        return ELEquation("nonlinear", 4, form=form, text="w⁽⁴⁾w² + 2w⁽³⁾ẇw − 3ẅẇ²",
                          residual=_el_printed, partials=_el_printed_partials, scale=_el_printed_scale)
    raise SchemaError(f"unknown EL form {form!r}, expected one of {EL_FORMS}")


def derive_el(T, Q, el_form="derived"):
    if T.is_linear:
        return derive_el_linear(T, Q)
    if (T.n, T.k) != (1, 1):
        raise UnsupportedOperatorError(f"no Euler-Lagrange equation for {T}")
    return derive_el_L11(Q, el_form)


def _initial_guess(problem, grid):
    a, b = problem.interval
    left = problem.left.values[:problem.bc_count, 0]
    right = problem.right.values[:problem.bc_count, 0]
    if _is_exponential_family(problem.type):
        if left[0] * right[0] > 0:
            return log_hermite_guess((a, b), left, right, grid)
        warnings.warn("boundary members of the exponential family have opposite signs; "
                      "the Euler-Lagrange equation degenerates at w = 0", SignChangeWarning)
    return hermite_guess((a, b), left, right, grid)


def _is_exponential_family(T):
    return not T.is_linear and (T.n, T.k) == (1, 1)


def solve_signal_raccordation(problem, el_form="derived", n_grid=GRID_POINTS,
                              n_nodes=COLLOCATION_NODES, tol=BVP_RESIDUAL_TOL, verbose=False):
    """
    The raccordation of ``problem``.

    Linear types give a closed-form Trajectory (mode basis of the EL
    polynomial); the exponential family is solved by collocation on
    ``n_nodes`` nodes. ``report`` holds the EL equation, the achieved cost, the
    EL residual and the boundary mismatch.
    """
    T, Q = problem.type, problem.norm
    a, b = problem.interval
    el = derive_el(T, Q, el_form)
    if verbose:
        sys.stdout.write(f"\tEuler-Lagrange equation: {el}\n")
    labels = ["w"] if problem.ncomp == 1 else [f"w{j + 1}" for j in range(problem.ncomp)]
    bcs = problem.boundary_values()
    if el.kind == "linear":
        conds = tuple(Condition.derivative(a if bc.side == "a" else b, bc.order, bc.value,
                                           bc.component, problem.ncomp) for bc in bcs)
        w = solve_linear_bvp(LinearBVP(el.poly, conds, (a, b), problem.ncomp, n_grid, tuple(labels)),
                             tol=tol, verbose=verbose)
        cost = sobolev_cost(w.apply(T.op), Q)
        el_residual = w.report["ode_residual"]
    else:
        grid = np.linspace(a, b, n_nodes)
        init = _initial_guess(problem, grid)
        member = member_from_jet(problem.left)
        start_bcs = [bc if bc.side == "a" else bc._replace(value=float(member.derivative([b], bc.order)[0, 0]))
                     for bc in bcs]
        continuation = (start_bcs, Trajectory.from_closed_form(member, grid))
        w = solve_nonlinear_bvp(el.residual, el.order, bcs, init, partials=el.partials,
                                scale=el.scale, tol=tol, continuation=continuation, verbose=verbose)
        w.labels = labels
        cost = sobolev_cost(equation_error(T, w), Q)
        el_residual = w.report["residual"]
    mismatch = max(abs(float(w.derivative(bc.order, None)[0 if bc.side == "a" else -1, bc.component]) - bc.value)
                   for bc in bcs)
    w.report.update(el=el.to_dict(), cost=cost, el_residual=el_residual, boundary_mismatch=mismatch)
    if el.kind == "linear":
        w.report["roots"] = [[z.real, z.imag, m] for z, m in char_roots(el.poly)]
    if verbose:
        sys.stdout.write(f"\traccordation cost {cost:.12g}, EL residual {el_residual:.3e}\n")
    return w


def solve_signal_oracle(problem, segments=ORACLE_SEGMENTS, n_grid=GRID_POINTS, x0=None, verbose=False):
    """
    Direct minimization of the cost over B-splines on ``segments`` pieces with
    the same boundary values, sampled on ``n_grid`` points. Nonlinear types
    start from the Hermite guess unless ``x0`` (values on that grid) is given.
    """
    a, b = problem.interval
    grid = np.linspace(a, b, n_grid)
    cost = discretize_cost(problem.type, problem.norm, problem.ncomp, segments)
    if x0 is None and not cost.linear:
        x0 = _initial_guess(problem, grid).samples[:, 0]
    return direct_minimize(cost, problem.boundary_values(), grid, x0=x0, verbose=verbose)


def gluskabi_map(problem, solution, w1, w2, pad, n_pad=201):
    """
    Glued plot data: ``w1`` on ``[a-pad, a)``, the raccordation on ``[a, b]``,
    ``w2`` on ``(b, b+pad]``, with a ``segment`` column.
    """
    a, b = problem.interval
    labels = solution.labels
    frames = []
    if pad > 0:
        t = np.linspace(a - pad, a, n_pad)[:-1]
        frames.append(pd.DataFrame(w1.derivative(t, 0), columns=labels).assign(segment="w1").assign(t=t))
    frames.append(solution.to_frame().assign(segment="raccordation"))
    if pad > 0:
        t = np.linspace(b, b + pad, n_pad)[1:]
        frames.append(pd.DataFrame(w2.derivative(t, 0), columns=labels).assign(segment="w2").assign(t=t))
    out = pd.concat(frames, ignore_index=True)
    return out[["t"] + labels + ["segment"]]
