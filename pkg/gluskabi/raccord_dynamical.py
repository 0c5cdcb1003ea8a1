"""
Raccordations along the trajectories of ``P(D) y = N(D) u``.

A unimodular ``U`` with ``[N P] U = [I O]`` parametrizes the behavior as
``u = −U12(D) η``, ``y = U22(D) η`` with a free latent ``η``; the weighted
persistence cost of ``(u, y)`` then has the Euler-Lagrange equation
``(U12* X U12 + U22* Z U22) η = 0`` with ``X = op* Qᵘ op`` and ``Z = op* Qʸ op``.
"""
import math
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import simpson

from .behavior_types import Jet, check_member, sobolev_cost
from .exceptions import (DimensionError, InconsistentBoundaryError, NotCoprimeError,
                         NotMinimalError, SchemaError, SingularBoundaryError,
                         UnsupportedOperatorError)
from .odesolve import (BVP_RESIDUAL_TOL, GRID_POINTS, ORACLE_SEGMENTS, Condition, DiscretizedFunctional,
                       LinearBVP, SplineSpace, Trajectory, char_roots, direct_minimize,
                       solve_linear_bvp)
from .polyops import (PolyMatrix, Polynomial, _as_matrix, adjoint, as_rational,
                      controllability_report, is_proper, is_unimodular, partition_completion, unimodular_completion)

DYNAMICS_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class DynamicalProblem:
    """
    Plant, type, input/output norms and boundary jets.

    ``left_u``/``right_u`` carry the ``q-g`` inputs, ``left_y``/``right_y``
    the ``g`` outputs. Jets for a signal whose norm is zero are optional.
    """
    P: PolyMatrix
    N: PolyMatrix
    type: object
    norm_u: object
    norm_y: object
    left_u: Optional[Jet] = None
    left_y: Optional[Jet] = None
    right_u: Optional[Jet] = None
    right_y: Optional[Jet] = None

    def __post_init__(self):
        P, N = _as_matrix(self.P), _as_matrix(self.N)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "N", N)
        if not P.is_square() or N.rows != P.rows:
            raise DimensionError(f"incompatible plant shapes P {P.shape}, N {N.shape}")
        if not self.type.is_linear:
            raise UnsupportedOperatorError("dynamical raccordations need a linear type")
        if self.norm_u.is_zero and self.norm_y.is_zero:
            raise SchemaError("at least one of the input and output norms must be nonzero")
        if self.norm_u.interval != self.norm_y.interval:
            raise SchemaError("input and output norms live on different intervals")
        if P.det().is_zero():
            raise NotMinimalError("det P is identically zero")
        if not is_proper(P, N):
            raise SchemaError("P⁻¹N is not proper")
        report = controllability_report(P, N)
        if not report["controllable"]:
            raise NotCoprimeError("P and N are not left coprime", common_factor=str(report["gcd"]))
        self._check_jets()

    @classmethod
    def from_signals(cls, P, N, T, Qu, Qy, u1=None, y1=None, u2=None, y2=None):
        """Jets of closed-form signals, deep enough for any condition the solver may impose."""
        P, N = _as_matrix(P), _as_matrix(N)
        a, b = Qu.interval
        eta = build_eta_system(P, N, T, Qu, Qy)
        depth = max(eta.order, T.required_order + 1, max(P.degree, N.degree) + 1)

        def jet(w, t):
            return None if w is None else w.jet(t, depth)

        return cls(P, N, T, Qu, Qy, jet(u1, a), jet(y1, a), jet(u2, b), jet(y2, b))

    @property
    def interval(self):
        return self.norm_u.interval

    @property
    def g(self):
        return self.P.rows

    @property
    def n_inputs(self):
        return self.N.cols

    def _check_jets(self):
        a, b = self.interval
        for label, jet, ncomp, norm in (("left input", self.left_u, self.n_inputs, self.norm_u),
                                        ("left output", self.left_y, self.g, self.norm_y),
                                        ("right input", self.right_u, self.n_inputs, self.norm_u),
                                        ("right output", self.right_y, self.g, self.norm_y)):
            if jet is None:
                if not norm.is_zero:
                    raise SchemaError(f"{label} boundary data are required")
                continue
            if jet.ncomp != ncomp:
                raise DimensionError(f"{label} jet has {jet.ncomp} components, expected {ncomp}")
            t = a if label.startswith("left") else b
            if abs(jet.t - t) > 1e-12 * max(1.0, abs(t)):
                raise SchemaError(f"{label} jet taken at t={jet.t:g}, expected {t:g}")
            need = self.type.required_order + 1
            if jet.depth < need:
                raise DimensionError(f"{label} jet has {jet.depth} derivatives, {need} needed to check membership",
                                     depth=jet.depth, required=need)
            check_member(self.type, jet, label=f"{label} boundary data")
        for side, ju, jy in (("left", self.left_u, self.left_y), ("right", self.right_u, self.right_y)):
            if ju is None or jy is None:
                continue
            depth = max(self.P.degree, self.N.degree) + 1
            if min(ju.depth, jy.depth) < depth:
                raise DimensionError(f"{side} jets have {min(ju.depth, jy.depth)} derivatives, "
                                     f"{depth} needed to check the dynamics", depth=min(ju.depth, jy.depth),
                                     required=depth)
            # P(D) y - N(D) u evaluated on the jets
            gap = _apply_to_jet(self.P, jy) - _apply_to_jet(self.N, ju)
            scale = max(1.0, float(np.max(np.abs(jy.values))), float(np.max(np.abs(ju.values))))
            if np.max(np.abs(gap)) > DYNAMICS_TOL * scale:
                raise InconsistentBoundaryError(f"{side} boundary data violate the dynamics",
                                                residual=float(np.max(np.abs(gap))))


def _apply_to_jet(M, jet):
    return np.array([sum(float(c) * jet.values[d, j]
                         for j in range(M.cols) for d, c in enumerate(M[i, j].coeffs))
                     for i in range(M.rows)])


@dataclass(frozen=True, eq=False)
class EtaSystem:
    """Latent Euler-Lagrange operator and the completion blocks it was built from."""
    eta_poly: PolyMatrix
    U: PolyMatrix
    U12: PolyMatrix
    U22: PolyMatrix
    X: PolyMatrix
    Z: PolyMatrix

    @property
    def charpoly(self):
        """``det eta_poly``; its degree is the dimension of the η solution space."""
        return self.eta_poly.det()

    @property
    def order(self):
        return self.charpoly.degree

    @property
    def canonical(self):
        """Monic ``eta_poly`` for a scalar latent, the matrix itself otherwise."""
        if self.eta_poly.shape == (1, 1):
            return self.eta_poly.to_scalar().monic()
        return self.eta_poly

    def to_dict(self):
        out = {"eta_poly": str(self.eta_poly), "order": self.order,
               "U": str(self.U), "U12": str(self.U12), "U22": str(self.U22)}
        if self.eta_poly.shape == (1, 1):
            out["canonical"] = str(self.canonical)
            out["coeffs"] = [str(c) for c in self.canonical.coeffs]
        return out


def _weight_operator(T, Q, n):
    if Q.is_zero:
        return PolyMatrix.zeros(n, n)
    x = T.op.adjoint() * Q.q_poly * T.op
    return PolyMatrix.diag([x] * n)


def build_eta_system(P, N, T, Qu, Qy, completion=None, verbose=False):
    """
    ``U12* X U12 + U22* Z U22`` from a completion of ``[N P]``.

    ``completion`` overrides the computed ``U`` (it must satisfy
    ``[N P] U = [I O]``).
    """
    P, N = _as_matrix(P), _as_matrix(N)
    g = P.rows
    U = unimodular_completion(N, P, verbose=verbose) if completion is None else _as_matrix(completion)
    check = PolyMatrix.hstack(N, P) * U
    target = PolyMatrix.hstack(PolyMatrix.identity(g), PolyMatrix.zeros(g, U.cols - g))
    if check != target or not is_unimodular(U):
        raise SchemaError("the completion does not satisfy [N P] U = [I O]")
    blocks = partition_completion(U, g)
    U12, U22 = blocks["U12"], blocks["U22"]
    X = _weight_operator(T, Qu, N.cols)
    Z = _weight_operator(T, Qy, g)
    eta = adjoint(U12) * X * U12 + adjoint(U22) * Z * U22
    if verbose:
        sys.stdout.write(f"\tlatent equation: {eta}\n")
    return EtaSystem(eta, U, U12, U22, X, Z)


def reparametrize_completion(U, g, V21, V22):
    """
    ``U · [[I, 0], [V21, V22]]``, another completion of the same ``[N P]``
    when ``V22`` is unimodular.
    """
    U, V21, V22 = _as_matrix(U), _as_matrix(V21), _as_matrix(V22)
    m = U.rows - g
    if V22.shape != (m, m) or V21.shape != (m, g):
        raise DimensionError(f"blocks V21 {V21.shape}, V22 {V22.shape} do not fit a {U.shape} completion")
    if not is_unimodular(V22):
        raise SchemaError("V22 must be unimodular")
    V = PolyMatrix.vstack(PolyMatrix.hstack(PolyMatrix.identity(g), PolyMatrix.zeros(g, m)),
                          PolyMatrix.hstack(V21, V22))
    return U * V


def _active(problem, unweighted=False):
    out = []
    if not problem.norm_u.is_zero or (unweighted and problem.left_u is not None and problem.right_u is not None):
        out += [("u", problem.left_u, problem.right_u, j) for j in range(problem.n_inputs)]
    if not problem.norm_y.is_zero or (unweighted and problem.left_y is not None and problem.right_y is not None):
        out += [("y", problem.left_y, problem.right_y, j) for j in range(problem.g)]
    return out


def _has_unweighted_jets(problem):
    return len(_active(problem, True)) > len(_active(problem))


def boundary_conditions(problem, eta, unweighted=False):
    """
    Derivatives ``0 .. d-1`` of every weighted signal at both ends, ``d``
    the smallest depth whose condition count reaches the order of the latent
    equation. With ``unweighted`` the signals under a zero norm join in when
    their jets are given.
    """
    a, b = problem.interval
    active = _active(problem, unweighted)
    r = eta.order
    d = max(1, math.ceil(r / (2 * len(active))))
    conds = []
    for i in range(d):
        for name, left, right, j in active:
            row = (-1 * eta.U12[j:j + 1, :]) if name == "u" else eta.U22[j:j + 1, :]
            op = Polynomial.monomial(i) * row
            for t, jet in ((a, left), (b, right)):
                if jet.depth <= i:
                    raise DimensionError(f"{name} jet at t={t:g} has {jet.depth} derivatives, {d} needed")
                conds.append(Condition(t, op, float(jet.values[i, j])))
    return tuple(conds), d


def solve_dynamical_raccordation(problem, completion=None, n_grid=GRID_POINTS, tol=BVP_RESIDUAL_TOL,
                                 verbose=False):
    """
    Closed-form ``(u, y)`` Trajectories of the raccordation.

    ``u.report`` holds the latent equation, its roots, the boundary-system
    condition number, the cost and the dynamics residual.
    """
    a, b = problem.interval
    eta = build_eta_system(problem.P, problem.N, problem.type, problem.norm_u, problem.norm_y,
                           completion, verbose)
    m = problem.n_inputs
    ode = eta.eta_poly.to_scalar() if eta.eta_poly.shape == (1, 1) else eta.eta_poly
    unweighted = False
    conds, d = boundary_conditions(problem, eta)
    try:
        latent = solve_linear_bvp(LinearBVP(ode, conds, (a, b), m, n_grid), tol=tol, verbose=verbose)
    except SingularBoundaryError:
        if not _has_unweighted_jets(problem):
            raise
        if verbose:
            sys.stdout.write("\tweighted data leave the latent free, adding the unweighted jets\n")
        unweighted = True
        conds, d = boundary_conditions(problem, eta, unweighted)
        latent = solve_linear_bvp(LinearBVP(ode, conds, (a, b), m, n_grid), tol=tol, verbose=verbose)
    basis = latent.basis
    uc = basis.apply(-1 * eta.U12, latent.coeffs)
    yc = basis.apply(eta.U22, latent.coeffs)
    u_labels = ["u"] if m == 1 else [f"u{j + 1}" for j in range(m)]
    y_labels = ["y"] if problem.g == 1 else [f"y{j + 1}" for j in range(problem.g)]
    u = Trajectory.from_basis(basis, uc, latent.grid, labels=u_labels)
    y = Trajectory.from_basis(basis, yc, latent.grid, labels=y_labels)
    gap = basis.apply(problem.P, yc) - basis.apply(problem.N, uc)
    coeff_scale = max(1.0, float(np.max(np.abs(uc))), float(np.max(np.abs(yc))))
    gap_grid = y.apply(problem.P).samples - u.apply(problem.N).samples
    cost = sobolev_cost(u.apply(problem.type.op), problem.norm_u) + \
        sobolev_cost(y.apply(problem.type.op), problem.norm_y)
    report = {"eta": eta.to_dict(),
              "roots": [[z.real, z.imag, k] for z, k in char_roots(eta.charpoly)],
              "condition_number": latent.report["condition_number"],
              "boundary_residual": latent.report["boundary_residual"],
              "derivatives_matched": d,
              "unweighted_conditions": unweighted,
              "conditions": len(conds),
              "dynamics_residual": float(np.max(np.abs(gap))) / coeff_scale,
              "dynamics_residual_grid": float(np.max(np.abs(gap_grid))),
              "cost": cost}
    u.report.update(report)
    y.report.update(report)
    if verbose:
        sys.stdout.write(f"\tdynamical raccordation cost {cost:.12g}, "
                         f"dynamics residual {report['dynamics_residual']:.3e}\n")
    return u, y


def discretize_dynamical_cost(problem, eta, segments=ORACLE_SEGMENTS, order=0):
    """
    ``‖op u‖²_{Qᵘ} + ‖op y‖²_{Qʸ}`` over B-splines for the latent ``η`` with
    ``u = −U12 η`` and ``y = U22 η``, so every candidate obeys the dynamics.
    ``order`` is the highest derivative of ``η`` the boundary conditions reach.
    """
    T = problem.type
    blocks = []
    if not problem.norm_u.is_zero:
        blocks.append((problem.norm_u, -1 * eta.U12))
    if not problem.norm_y.is_zero:
        blocks.append((problem.norm_y, eta.U22))
    top = max(Q.order + T.op.degree + block.degree for Q, block in blocks)
    space = SplineSpace.for_order(problem.interval, max(top, order), segments, problem.n_inputs)
    sw = np.sqrt(space.weights)[:, None]
    rows = []
    for Q, block in blocks:
        for i, rho in enumerate(Q.weights):
            if rho == 0:
                continue
            op = Polynomial.monomial(i) * T.op
            rows += [math.sqrt(float(rho)) * sw * space.operator_rows(op * block[j:j + 1, :], space.nodes)
                     for j in range(block.rows)]
    labels = [f"u{j + 1}" for j in range(problem.n_inputs)] + [f"y{j + 1}" for j in range(problem.g)]
    return DiscretizedFunctional.quadratic(space, rows, output=PolyMatrix.vstack(-1 * eta.U12, eta.U22),
                                           labels=labels)


def solve_dynamical_oracle(problem, segments=ORACLE_SEGMENTS, n_grid=GRID_POINTS, unweighted=False,
                           verbose=False):
    """
    Direct minimization over a B-spline latent with the boundary conditions
    the closed-form solver used (``unweighted`` as in its report). Returns
    one Trajectory with columns ``u1 .. y1 ..``.
    """
    a, b = problem.interval
    eta = build_eta_system(problem.P, problem.N, problem.type, problem.norm_u, problem.norm_y)
    conds, _ = boundary_conditions(problem, eta, unweighted)
    order = max(c.operator.degree for c in conds)
    cost = discretize_dynamical_cost(problem, eta, segments, order)
    return direct_minimize(cost, conds, np.linspace(a, b, n_grid), verbose=verbose)


def rc_circuit(R, C):
    """``(P, N)`` of a series RC circuit driven by a voltage: ``q̇ + q/(RC) = u/R``."""
    R, C = as_rational(R), as_rational(C)
    if R <= 0 or C <= 0:
        raise SchemaError(f"R and C must be positive, got R={R}, C={C}")
    return PolyMatrix([[Polynomial([1 / (R * C), 1])]]), PolyMatrix([[Polynomial([1 / R])]])


def resistor_heat(q, R):
    """Heat ``R ∫ q̇² dt`` dissipated while the charge follows ``q``."""
    dq = q.derivative(1)[:, 0]
    return float(R) * float(simpson(dq ** 2, x=q.grid))
