"""
Numerical backends: characteristic-root bases for linear constant-coefficient
boundary value problems, finite-difference collocation with damped Newton for
the nonlinear ones, and the B-spline direct-minimization oracle that every
Euler-Lagrange solution is checked against.
"""
import math
import sys
import warnings
from collections import namedtuple
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse as sparse
from scipy.interpolate import BPoly, BSpline
from scipy.sparse.linalg import spsolve

from .exceptions import (DimensionError, InconsistentBoundaryError, LowAccuracyWarning,
                         SchemaError, SingularBoundaryError, SolverError,
                         ZeroPolynomialError)
from .polyops import PolyMatrix, Polynomial, ext_gcd

GRID_POINTS = 1001
COLLOCATION_NODES = 401
ORACLE_SEGMENTS = 64
ORACLE_MAXITER = 100
DESCENT_TOL = 1e-14
DESCENT_STALL_TOL = 1e-9
FD_ACCURACY = 4
NEWTON_MAXITER = 100
CONTINUATION_STEPS = 8
RANK_RTOL = 1e-10
ROOT_CLUSTER_RTOL = 1e-8
BVP_RESIDUAL_TOL = 1e-8
RATIONAL_ROOT_BOUND = 10 ** 6

BoundaryValue = namedtuple("BoundaryValue", ["side", "order", "value", "component"], defaults=(0,))
BoundaryValue.__doc__ = "Prescribed derivative ``order`` of ``component`` at endpoint ``side`` ('a' or 'b')."


""" Characteristic roots """
def square_free_decomposition(p):
    """
    Yun's algorithm over Q: ``p = lead * prod(f_i ** i)`` with square-free,
    pairwise coprime, monic ``f_i``. Returns ``[(f_i, i), ...]`` for nonconstant ``f_i``.
    """
    p = Polynomial(p)
    if p.degree < 1:
        return []
    p = p.monic()
    dp = p.derivative()
    a0 = ext_gcd(p, dp)[0]
    b, c = p // a0, dp // a0
    d = c - b.derivative()
    out, i = [], 1
    while b.degree > 0:
        a = ext_gcd(b, d)[0] if not d.is_zero() else b.monic()
        if a.degree > 0:
            out.append((a, i))
        b = b // a
        c = d // a
        d = c - b.derivative()
        i += 1
    return out


def _divisors(n):
    n = abs(n)
    small = [d for d in range(1, math.isqrt(n) + 1) if n % d == 0]
    return sorted(set(small + [n // d for d in small]))


def rational_roots(f):
    """
    Exact rational roots of a square-free polynomial (rational root theorem).

    Returns the roots and the monic deflated cofactor. The search is skipped when
    the integer-scaled end coefficients exceed ``RATIONAL_ROOT_BOUND``.
    """
    f = Polynomial(f)
    roots = []
    if f.degree >= 1 and f[0] == 0:
        roots.append(Fraction(0))
        f = f // Polynomial.xi()
    if f.degree < 1:
        return roots, _monic(f)
    lcm = math.lcm(*[c.denominator for c in f.coeffs])
    ints = [int(c * lcm) for c in f.coeffs]
    if abs(ints[0]) > RATIONAL_ROOT_BOUND or abs(ints[-1]) > RATIONAL_ROOT_BOUND:
        return roots, _monic(f)
    for num in _divisors(ints[0]):
        for den in _divisors(ints[-1]):
            for r in (Fraction(num, den), Fraction(-num, den)):
                if f.degree >= 1 and f(r) == 0:
                    roots.append(r)
                    f = f // Polynomial([-r, 1])
    return roots, _monic(f)


def _monic(f):
    return f if f.is_zero() else f.monic()


def char_roots(p, cluster_rtol=ROOT_CLUSTER_RTOL):
    """
    Roots of ``p`` with multiplicities.

    Multiplicities come from an exact square-free decomposition, rational roots
    are found exactly, the rest are companion-matrix eigenvalues
    (``numpy.polynomial.polynomial.polyroots``) of the square-free factors.
    Complex roots come in exact conjugate pairs.

    Returns
    -------
    list of (complex, int), sorted by real then imaginary part.
    """
    p = Polynomial(p)
    if p.is_zero():
        raise ZeroPolynomialError("the zero polynomial has no characteristic roots")
    found = []
    for f, mult in square_free_decomposition(p):
        exact, rest = rational_roots(f)
        found += [(complex(float(r)), mult) for r in exact]
        if rest.degree >= 1:
            numeric = np.polynomial.polynomial.polyroots(rest.to_numpy())
            for z in numeric:
                if abs(z.imag) <= cluster_rtol * max(1.0, abs(z)):
                    found.append((complex(z.real, 0.0), mult))
                elif z.imag > 0:
                    found.append((complex(z), mult))
                    found.append((complex(z).conjugate(), mult))
    merged = []
    for z, m in sorted(found, key=lambda zm: (zm[0].real, zm[0].imag)):
        if merged and abs(merged[-1][0] - z) <= cluster_rtol * max(1.0, abs(z)):
            merged[-1] = (merged[-1][0], merged[-1][1] + m)
        else:
            merged.append((z, m))
    assert sum(m for _, m in merged) == p.degree
    return merged


""" Mode bases """
@dataclass(frozen=True)
class Mode:
    """``(t-anchor)**power * exp(sigma (t-anchor))`` times ``cos``/``sin(omega (t-anchor))`` or 1."""
    sigma: float
    omega: float
    power: int
    part: str
    anchor: float

    @property
    def root(self):
        return complex(self.sigma, self.omega)

    def __call__(self, t):
        tau = np.asarray(t, dtype=float) - self.anchor
        base = tau ** self.power * np.exp(self.sigma * tau)
        if self.part == "cos":
            return base * np.cos(self.omega * tau)
        if self.part == "sin":
            return base * np.sin(self.omega * tau)
        return base


class ModeBasis():
    """
    Real basis of the kernel of a constant-coefficient operator.

    Modes with ``Re λ <= 0`` are anchored at ``a`` and the others at ``b``, so
    every basis function is bounded by a polynomial on ``[a, b]``.
    Differentiation acts on coefficient vectors through ``dmat``:
    if ``f = Φ a`` then ``f' = Φ (dmat @ a)``.
    """
    def __init__(self, modes):
        self.modes = tuple(modes)
        self.dmat = self._differentiation_matrix()

    @classmethod
    def from_roots(cls, roots, interval):
        a, b = interval
        modes = []
        for z, mult in roots:
            anchor = a if z.real <= 0 else b
            if z.imag == 0:
                modes += [Mode(z.real, 0.0, j, "exp", anchor) for j in range(mult)]
            elif z.imag > 0:
                for j in range(mult):
                    modes += [Mode(z.real, z.imag, j, "cos", anchor), Mode(z.real, z.imag, j, "sin", anchor)]
        return cls(modes)

    def __len__(self):
        return len(self.modes)

    def _differentiation_matrix(self):
        n = len(self.modes)
        index = {(m.part, m.sigma, m.omega, m.power): k for k, m in enumerate(self.modes)}
        dm = np.zeros((n, n))
        for k, m in enumerate(self.modes):
            dm[k, k] += m.sigma
            if m.power > 0:
                dm[index[(m.part, m.sigma, m.omega, m.power - 1)], k] += m.power
            if m.part == "cos":
                dm[index[("sin", m.sigma, m.omega, m.power)], k] -= m.omega
            elif m.part == "sin":
                dm[index[("cos", m.sigma, m.omega, m.power)], k] += m.omega
        return dm

    def evaluate(self, t):
        """Basis values, shape ``(len(t), n_modes)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([m(t) for m in self.modes]) if self.modes else np.zeros((len(t), 0))

    def operator(self, poly):
        """Matrix of ``poly(D)`` acting on coefficient vectors."""
        n = len(self.modes)
        out = np.zeros((n, n))
        for c in reversed(Polynomial(poly).coeffs):
            out = out @ self.dmat + float(c) * np.eye(n)
        return out

    def apply(self, op, coeffs):
        """Coefficients of ``op(D) f`` for a PolyMatrix ``op`` (out x in) or a scalar Polynomial."""
        coeffs = np.atleast_2d(coeffs)
        if isinstance(op, Polynomial):
            return self.operator(op) @ coeffs
        if op.cols != coeffs.shape[1]:
            raise DimensionError(f"operator {op.shape} on {coeffs.shape[1]} components")
        return np.column_stack([sum(self.operator(op[i, j]) @ coeffs[:, j] for j in range(op.cols))
                                for i in range(op.rows)])

    def describe(self):
        return [{"sigma": m.sigma, "omega": m.omega, "power": m.power, "part": m.part,
                 "anchor": m.anchor} for m in self.modes]


""" Finite differences """
@lru_cache(maxsize=None)
def fd_weights(offsets, order):
    """Exact stencil weights for the ``order``-th derivative on integer ``offsets`` (unit spacing)."""
    size = len(offsets)
    V = [[Fraction(s) ** m / math.factorial(m) for s in offsets] for m in range(size)]
    rhs = [Fraction(1 if m == order else 0) for m in range(size)]
    # Gauss-Jordan in exact arithmetic; size is tiny
    A = [row[:] + [r] for row, r in zip(V, rhs)]
    for col in range(size):
        piv = next(i for i in range(col, size) if A[i][col] != 0)
        A[col], A[piv] = A[piv], A[col]
        inv = 1 / A[col][col]
        A[col] = [x * inv for x in A[col]]
        for i in range(size):
            if i != col and A[i][col] != 0:
                f = A[i][col]
                A[i] = [x - f * y for x, y in zip(A[i], A[col])]
    return tuple(float(A[i][-1]) for i in range(size))


@lru_cache(maxsize=64)
def fd_matrix(n, h, order, accuracy=FD_ACCURACY):
    """
    Sparse ``n x n`` differentiation matrix of the given order on a uniform grid.

    Each row uses ``order + accuracy`` consecutive nodes, centred where the
    grid allows and shifted inward near the ends, so the truncation error is
    ``O(h**accuracy)`` everywhere.
    """
    if order == 0:
        return sparse.identity(n, format="csr")
    size = order + accuracy
    if size > n:
        raise DimensionError(f"{n} nodes cannot carry a derivative of order {order}")
    rows, cols, vals = [], [], []
    for j in range(n):
        start = min(max(j - size // 2, 0), n - size)
        offsets = tuple(range(start - j, start - j + size))
        w = fd_weights(offsets, order)
        rows += [j] * size
        cols += list(range(start, start + size))
        vals += list(w)
    return sparse.csr_matrix((np.array(vals) / h ** order, (rows, cols)), shape=(n, n))


def _uniform_step(grid):
    h = (grid[-1] - grid[0]) / (len(grid) - 1)
    if not np.allclose(np.diff(grid), h, rtol=1e-9, atol=1e-12 * max(1.0, abs(h))):
        raise SchemaError("finite differences need a uniform grid")
    return h


""" Trajectories """
class Trajectory():
    """
    A sampled signal on ``[a, b]`` with derivatives on demand.

    Attributes
    ----------
    grid : np.ndarray
        sorted sample times, ``grid[0] == a`` and ``grid[-1] == b``
    samples : np.ndarray
        values, shape ``(len(grid), ncomp)``
    basis : ModeBasis or None
        closed form; with it derivatives are exact and ``samples == basis.evaluate(grid) @ coeffs``
    coeffs : np.ndarray or None
        basis coefficients, shape ``(n_modes, ncomp)``
    closed_form : object or None
        anything with ``derivative(t, order) -> (len(t), ncomp)``, used like a basis
    labels : list of str
        column names
    report : dict
        solver diagnostics
    """
    def __init__(self, grid, samples, basis=None, coeffs=None, closed_form=None,
                 labels=None, report=None):
        grid = np.asarray(grid, dtype=float)
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
            raise SchemaError("a trajectory grid must be strictly increasing with two or more points")
        if samples.shape[0] != len(grid):
            raise DimensionError(f"{samples.shape[0]} samples on {len(grid)} grid points")
        self.grid = grid
        self.samples = samples
        self.basis = basis
        self.coeffs = None if coeffs is None else np.atleast_2d(np.asarray(coeffs, dtype=float))
        self.closed_form = closed_form
        self.labels = list(labels) if labels is not None else \
            (["w"] if samples.shape[1] == 1 else [f"w{j + 1}" for j in range(samples.shape[1])])
        self.report = dict(report or {})

    @classmethod
    def from_basis(cls, basis, coeffs, grid, **kwargs):
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        return cls(grid, basis.evaluate(grid) @ coeffs, basis=basis, coeffs=coeffs, **kwargs)

    @classmethod
    def from_closed_form(cls, closed_form, grid, **kwargs):
        return cls(grid, closed_form.derivative(np.asarray(grid, dtype=float), 0),
                   closed_form=closed_form, **kwargs)

    @classmethod
    def from_samples(cls, grid, samples, **kwargs):
        """User samples; derivatives will come from 4th-order finite differences."""
        warnings.warn("derivatives of sampled trajectories use finite differences", LowAccuracyWarning)
        traj = cls(grid, samples, **kwargs)
        _uniform_step(traj.grid)
        return traj

    @property
    def interval(self):
        return (float(self.grid[0]), float(self.grid[-1]))

    @property
    def ncomp(self):
        return self.samples.shape[1]

    def is_exact(self):
        return self.basis is not None or self.closed_form is not None

    def derivative(self, order, t=None):
        """
        ``order``-th derivative, shape ``(len(t), ncomp)``; on the grid when ``t`` is None.
        Off-grid evaluation needs a closed form.
        """
        if self.basis is not None:
            tt = self.grid if t is None else np.atleast_1d(t)
            return self.basis.evaluate(tt) @ (np.linalg.matrix_power(self.basis.dmat, order) @ self.coeffs)
        if self.closed_form is not None:
            tt = self.grid if t is None else np.atleast_1d(np.asarray(t, dtype=float))
            return np.asarray(self.closed_form.derivative(tt, order)).reshape(len(tt), -1)
        if t is not None:
            raise SchemaError("off-grid derivatives need a closed-form trajectory")
        h = _uniform_step(self.grid)
        return fd_matrix(len(self.grid), h, order) @ self.samples

    def derivatives(self, depth, t=None):
        """Stacked derivatives ``0 .. depth-1``, shape ``(depth, len(t), ncomp)``."""
        return np.stack([self.derivative(i, t) for i in range(depth)])

    def apply(self, op):
        """The trajectory ``op(D) w`` for a Polynomial (componentwise) or PolyMatrix operator."""
        if self.basis is not None:
            coeffs = self.basis.apply(op, self.coeffs)
            return Trajectory.from_basis(self.basis, coeffs, self.grid)
        if self.closed_form is not None:
            applied = _AppliedClosedForm(self.closed_form, op)
            return Trajectory.from_closed_form(applied, self.grid)
        return Trajectory(self.grid, _apply_sampled(op, self.derivative, self.ncomp))

    def resample(self, n):
        """Same signal on a uniform ``n``-point grid (closed forms only)."""
        grid = np.linspace(*self.interval, n)
        if self.basis is not None:
            return Trajectory.from_basis(self.basis, self.coeffs, grid, labels=self.labels, report=self.report)
        if self.closed_form is not None:
            return Trajectory.from_closed_form(self.closed_form, grid, labels=self.labels, report=self.report)
        raise SchemaError("resampling needs a closed-form trajectory")

    def to_frame(self, labels=None):
        """pandas DataFrame with a ``t`` column followed by one column per component."""
        labels = labels or self.labels
        df = pd.DataFrame(self.samples, columns=labels)
        df.insert(0, "t", self.grid)
        return df


def _apply_sampled(op, derivative, ncomp):
    if isinstance(op, Polynomial):
        out = sum((float(c) * derivative(d) for d, c in enumerate(op.coeffs) if c != 0),
                  np.zeros_like(derivative(0)))
        return out
    cols = []
    for i in range(op.rows):
        acc = 0
        for j in range(op.cols):
            for d, c in enumerate(op[i, j].coeffs):
                if c != 0:
                    acc = acc + float(c) * derivative(d)[:, j]
        cols.append(acc if not np.isscalar(acc) else np.zeros(derivative(0).shape[0]))
    return np.column_stack(cols)


class _AppliedClosedForm():
    def __init__(self, inner, op):
        self.inner = inner
        self.op = op

    def derivative(self, t, order):
        return _apply_sampled(self.op, lambda d: np.asarray(self.inner.derivative(t, d + order)).reshape(len(t), -1),
                              None)


""" Linear boundary value problems """
@dataclass(frozen=True)
class Condition:
    """``[operator(D) w](at) == value`` where ``operator`` is a 1 x ncomp PolyMatrix."""
    at: float
    operator: PolyMatrix
    value: float

    @classmethod
    def derivative(cls, at, order, value, component=0, ncomp=1):
        row = [Polynomial.monomial(order) if j == component else Polynomial() for j in range(ncomp)]
        return cls(float(at), PolyMatrix([row]), float(value))


@dataclass(frozen=True)
class LinearBVP:
    """
    ``ode(D) w = 0`` on ``interval`` with linear conditions.

    ``ode`` is a Polynomial applied to each of ``ncomp`` components or a square
    PolyMatrix coupling them.
    """
    ode: object
    conditions: tuple
    interval: tuple
    ncomp: int = 1
    n_grid: int = GRID_POINTS
    labels: Optional[tuple] = None


def solve_linear_bvp(bvp, rank_rtol=RANK_RTOL, tol=BVP_RESIDUAL_TOL, verbose=False):
    """
    Solve a linear constant-coefficient BVP in closed form.

    The conditions are applied analytically to the mode basis and the
    resulting system is solved by least squares, so more conditions than
    unknowns are allowed as long as they are consistent.

    Returns
    -------
    Trajectory with ``basis``/``coeffs`` and a ``report`` holding the roots,
    the boundary-system condition number and the residuals.

    Raises
    ------
    SingularBoundaryError
        the conditions do not determine a unique solution
    InconsistentBoundaryError
        the least-squares residual exceeds ``tol``
    """
    a, b = (float(x) for x in bvp.interval)
    if not a < b:
        raise SchemaError(f"empty interval [{a}, {b}]")
    if isinstance(bvp.ode, Polynomial):
        if bvp.ode.is_zero():
            raise ZeroPolynomialError("the ODE polynomial is zero")
        charpoly, ncomp, coupled = bvp.ode, bvp.ncomp, None
    else:
        if not bvp.ode.is_square():
            raise DimensionError(f"non-square ODE matrix {bvp.ode.shape}")
        charpoly, ncomp, coupled = bvp.ode.det(), bvp.ode.rows, bvp.ode
        if charpoly.is_zero():
            raise ZeroPolynomialError("the ODE matrix is singular")
    roots = char_roots(charpoly)
    basis = ModeBasis.from_roots(roots, (a, b))
    n = len(basis)
    if coupled is None:
        Z = np.eye(n * ncomp)
        kernel_residual = 0.0
    else:
        big = np.block([[basis.operator(coupled[i, j]) for j in range(ncomp)] for i in range(ncomp)])
        _, s, vt = np.linalg.svd(big)
        dim = charpoly.degree
        Z = vt[len(s) - dim:].T
        kernel_residual = float(s[len(s) - dim]) / max(float(s[0]), 1e-300) if dim else 0.0
    rows, values = [], []
    for cond in bvp.conditions:
        if cond.operator.cols != ncomp:
            raise DimensionError(f"condition on {cond.operator.cols} components, problem has {ncomp}")
        phi = basis.evaluate([cond.at])[0]
        rows.append(sum(phi @ basis.operator(cond.operator[0, j]) @ Z[j * n:(j + 1) * n, :]
                        for j in range(ncomp)))
        values.append(cond.value)
    B, v = np.array(rows).reshape(len(rows), Z.shape[1]), np.array(values, dtype=float)
    col_scale = np.max(np.abs(B), axis=0) if len(rows) else np.ones(Z.shape[1])
    col_scale[col_scale == 0] = 1.0
    theta, _, rank, sv = scipy.linalg.lstsq(B / col_scale, v, cond=rank_rtol)
    if rank < Z.shape[1]:
        raise SingularBoundaryError("the boundary conditions do not determine a unique solution",
                                    rank=int(rank), unknowns=int(Z.shape[1]), conditions=len(rows))
    theta = theta / col_scale
    resid = float(np.max(np.abs(B @ theta - v))) if len(rows) else 0.0
    if resid > tol * max(1.0, float(np.max(np.abs(v)))):
        raise InconsistentBoundaryError("the boundary conditions are inconsistent",
                                        residual=resid, tolerance=tol)
    coeffs = (Z @ theta).reshape(ncomp, n).T
    ode_res = basis.apply(charpoly, coeffs) if coupled is None else \
        basis.apply(coupled, coeffs)
    report = {"roots": [(z.real, z.imag, m) for z, m in roots],
              "condition_number": float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf"),
              "boundary_residual": resid,
              "ode_residual": float(np.max(np.abs(ode_res))) / max(1.0, float(np.max(np.abs(coeffs)))),
              "kernel_residual": kernel_residual,
              "rank": int(rank)}
    if verbose:
        sys.stdout.write(f"\tlinear BVP: {n * ncomp if coupled is None else Z.shape[1]} unknowns, "
                         f"{len(rows)} conditions, cond {report['condition_number']:.3g}\n")
    grid = np.linspace(a, b, bvp.n_grid)
    return Trajectory.from_basis(basis, coeffs, grid, labels=bvp.labels, report=report)


""" Nonlinear boundary value problems """
class _NewtonFailure(Exception):
    def __init__(self, W, info):
        self.W = W
        self.info = info


def _newton(W, D, D_abs, bcs, residual, partials, scale, tol, maxiter, verbose):
    n = len(W)
    eps = np.finfo(float).eps
    left = sum(1 for bc in bcs if bc.side == "a")
    right = sum(1 for bc in bcs if bc.side == "b")
    interior = np.arange(left, n - right)
    bc_rows = sparse.vstack([D[bc.order][[0 if bc.side == "a" else n - 1], :] for bc in bcs]).tocsr()
    bc_abs = abs(bc_rows)
    bc_vals = np.array([bc.value for bc in bcs], dtype=float)
    bc_scale = np.maximum(1.0, np.abs(bc_vals))

    def jets_of(x, mats):
        return np.stack([M @ x for M in mats])

    jets0 = jets_of(W, D)
    node_scale = scale(jets0)[interior] if scale is not None else np.ones(len(interior))
    top = float(np.max(node_scale)) if len(node_scale) else 1.0
    node_scale = np.maximum(node_scale, 1e-12 * top) if top > 0 else np.ones(len(interior))

    def F(x):
        jets = jets_of(x, D)
        r = residual(jets)[interior]
        return np.concatenate([(bc_rows @ x - bc_vals) / bc_scale, r / node_scale]), jets, r

    def converged(x, jets, r):
        s = scale(jets)[interior] if scale is not None else np.ones(len(interior))
        floor = 16 * eps * (scale(jets_of(np.abs(x), D_abs))[interior] if scale is not None
                            else np.abs(residual(jets_of(np.abs(x), D_abs))[interior]))
        S = float(np.max(s)) if len(s) else 1.0
        rel = float(np.max(np.abs(r))) / S if S > 0 else float(np.max(np.abs(r)))
        bc_err = np.abs(bc_rows @ x - bc_vals)
        bc_ok = np.all(bc_err <= tol * bc_scale + 16 * eps * (bc_abs @ np.abs(x)))
        return bool(np.all(np.abs(r) <= tol * S + floor) and bc_ok), rel

    f, jets, r = F(W)
    info = {"iterations": 0, "residual": None, "step": None}
    for it in range(maxiter + 1):
        ok, rel = converged(W, jets, r)
        info.update(iterations=it, residual=rel)
        if ok:
            return W, info
        if it == maxiter:
            break
        if partials is not None:
            p = partials(jets)
        else:
            p = []
            for i in range(len(D)):
                step = 1e-6 * (1.0 + np.abs(jets[i]))
                up, dn = jets.copy(), jets.copy()
                up[i] += step
                dn[i] -= step
                p.append((residual(up) - residual(dn)) / (2 * step))
        body = sum(sparse.diags(p[i][interior]) @ D[i][interior] for i in range(len(D)))
        J = sparse.vstack([sparse.diags(1.0 / bc_scale) @ bc_rows,
                           sparse.diags(1.0 / node_scale) @ body]).tocsc()
        delta = spsolve(J, -f)
        if not np.all(np.isfinite(delta)):
            raise _NewtonFailure(W, dict(info, reason="singular Newton system"))
        phi = 0.5 * f @ f
        alpha = 1.0
        while alpha >= 2.0 ** -20:
            f_new, jets_new, r_new = F(W + alpha * delta)
            if np.all(np.isfinite(f_new)) and 0.5 * f_new @ f_new <= (1 - 2e-4 * alpha) * phi:
                break
            alpha /= 2
        else:
            raise _NewtonFailure(W, dict(info, reason="line search failed"))
        W = W + alpha * delta
        f, jets, r = f_new, jets_new, r_new
        info["step"] = alpha
        if verbose:
            sys.stdout.write(f"\tNewton {it + 1}: step {alpha:.3g}, residual {rel:.3e}\n")
    raise _NewtonFailure(W, dict(info, reason="iteration limit"))


def solve_nonlinear_bvp(residual, order, bcs, init, partials=None, scale=None,
                        tol=BVP_RESIDUAL_TOL, maxiter=NEWTON_MAXITER, continuation=None,
                        continuation_steps=CONTINUATION_STEPS, verbose=False):
    """
    Finite-difference collocation of a scalar nonlinear ODE ``residual(jets) = 0``.

    Parameters
    ----------
    residual : callable
        maps jets of shape ``(order + 1, n)`` to pointwise residuals ``(n,)``
    order : int
        highest derivative in the residual
    bcs : list of BoundaryValue
        imposed with one-sided stencils at the end nodes; the residual is
        collocated on the remaining nodes
    init : Trajectory
        initial guess; its uniform grid is the collocation grid
    partials : callable, optional
        ``jets -> (order + 1, n)`` partial derivatives of ``residual`` with
        respect to each jet entry; central differences otherwise
    scale : callable, optional
        ``jets -> (n,)`` magnitude of the terms of the residual, the yardstick
        for ``tol``
    continuation : (list of BoundaryValue, Trajectory), optional
        an easy instance and its solution; when Newton fails from ``init`` the
        boundary values are moved from it to ``bcs`` in ``continuation_steps``
        steps

    Returns
    -------
    Trajectory (sampled, no basis) with ``report`` holding iterations and the
    final relative residual.
    """
    grid = init.grid
    n = len(grid)
    h = _uniform_step(grid)
    D = [fd_matrix(n, h, i) for i in range(order + 1)]
    D_abs = [abs(M) for M in D]
    W = init.samples[:, 0].copy()
    report = {"continuation_steps": 0}
    try:
        W, info = _newton(W, D, D_abs, bcs, residual, partials, scale, tol, maxiter, verbose)
    except _NewtonFailure as fail:
        if continuation is None:
            raise SolverError(f"Newton did not converge: {fail.info.get('reason')}",
                              residual=fail.info.get("residual"), iterations=fail.info.get("iterations"),
                              last_iterate=fail.W)
        start_bcs, start = continuation
        if verbose:
            sys.stdout.write(f"\tNewton failed ({fail.info.get('reason')}), continuing from an easy instance\n")
        W = start.samples[:, 0].copy()
        total = 0
        for s in np.linspace(0.0, 1.0, continuation_steps + 1)[1:]:
            blended = [bc._replace(value=(1 - s) * b0.value + s * bc.value) for b0, bc in zip(start_bcs, bcs)]
            try:
                W, info = _newton(W, D, D_abs, blended, residual, partials, scale, tol, maxiter, verbose)
            except _NewtonFailure as fail2:
                raise SolverError("continuation did not converge",
                                  stage=float(s), residual=fail2.info.get("residual"),
                                  reason=fail2.info.get("reason"), last_iterate=fail2.W)
            total += info["iterations"]
        info["iterations"] = total
        report["continuation_steps"] = continuation_steps
    report.update(iterations=info["iterations"], residual=info["residual"], converged=True, nodes=n)
    return Trajectory(grid, W, labels=init.labels, report=report)


def hermite_guess(interval, left, right, grid):
    """
    The polynomial of degree ``len(left) + len(right) - 1`` matching the
    derivative lists ``left`` at ``a`` and ``right`` at ``b``.
    """
    poly = BPoly.from_derivatives(list(interval), [list(left), list(right)])
    return Trajectory(grid, poly(grid))


def log_hermite_guess(interval, left, right, grid):
    """
    ``sign * exp(φ)`` with ``φ`` the cubic Hermite interpolant of ``log|w|``;
    keeps the sign of same-sign data of the form ``(w, w')`` and reproduces
    exponentials exactly.
    """
    (w0, v0), (w1, v1) = left[:2], right[:2]
    sign = np.sign(w0)
    phi = BPoly.from_derivatives(list(interval), [[np.log(abs(w0)), v0 / w0], [np.log(abs(w1)), v1 / w1]])
    return Trajectory(grid, sign * np.exp(phi(grid)))


""" Direct minimization """
class SplineSpace():
    """
    Clamped B-splines of ``degree`` on ``segments`` equal pieces of
    ``interval``, one block of ``size`` coefficients per component.

    ``nodes``/``weights`` are a composite Gauss-Legendre rule with
    ``quad_order`` points per piece, exact for products of two basis
    derivatives at the default ``2 * degree``.
    """
    def __init__(self, interval, segments=ORACLE_SEGMENTS, degree=5, ncomp=1, quad_order=None):
        a, b = (float(x) for x in interval)
        if not a < b:
            raise SchemaError(f"empty interval [{a}, {b}]")
        if segments < 1 or degree < 1 or ncomp < 1:
            raise SchemaError(f"invalid spline space: {segments} segments, degree {degree}, {ncomp} components")
        self.interval = (a, b)
        self.segments, self.degree, self.ncomp = int(segments), int(degree), int(ncomp)
        breaks = np.linspace(a, b, self.segments + 1)
        self.knots = np.concatenate([np.full(self.degree, a), breaks, np.full(self.degree, b)])
        self.size = self.segments + self.degree
        self._basis = BSpline(self.knots, np.eye(self.size), self.degree)
        gx, gw = np.polynomial.legendre.leggauss(quad_order or 2 * self.degree)
        h = (b - a) / self.segments
        self.nodes = (breaks[:-1, None] + 0.5 * h * (gx[None, :] + 1.0)).ravel()
        self.weights = np.tile(0.5 * h * gw, self.segments)

    @classmethod
    def for_order(cls, interval, order, segments=ORACLE_SEGMENTS, ncomp=1):
        """A space smooth enough for costs and conditions up to derivative ``order``."""
        return cls(interval, segments, max(5, order + 2), ncomp)

    @property
    def n_unknowns(self):
        return self.size * self.ncomp

    def design(self, x, order=0):
        """Values of the ``order``-th derivative of every basis function, ``(len(x), size)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if order > self.degree:
            return np.zeros((len(x), self.size))
        return self._basis(x, nu=order)

    def operator_rows(self, row, x):
        """Matrix taking stacked coefficients to ``[row(D) w](x)``; ``row`` is 1 x ncomp."""
        if isinstance(row, Polynomial):
            row = PolyMatrix([[row]])
        if row.shape != (1, self.ncomp):
            raise DimensionError(f"operator {row.shape} on {self.ncomp} components")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        blocks = []
        for j in range(self.ncomp):
            acc = np.zeros((len(x), self.size))
            for d, c in enumerate(row[0, j].coeffs):
                if c != 0:
                    acc += float(c) * self.design(x, d)
            blocks.append(acc)
        return np.hstack(blocks)

    def curve(self, coeffs):
        return SplineCurve(self, coeffs)


class SplineCurve():
    """Spline components with exact derivatives, usable as a Trajectory closed form."""
    def __init__(self, space, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        n = space.size
        self.degree = space.degree
        self.splines = [BSpline(space.knots, coeffs[j * n:(j + 1) * n], space.degree)
                        for j in range(space.ncomp)]

    def derivative(self, t, order):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if order > self.degree:
            return np.zeros((len(t), len(self.splines)))
        return np.column_stack([s(t, nu=order) for s in self.splines])


@dataclass
class DiscretizedFunctional:
    """
    A cost ``‖residual(x)‖²`` over the spline coefficients ``x`` of ``space``.

    Attributes
    ----------
    residual : callable
        ``x -> r`` with the quadrature weights folded in
    jacobian : callable
        ``x -> dr/dx`` (dense)
    curvature : callable, optional
        ``(x, r) -> Σ r_k ∇²r_k``; without it the descent uses Gauss-Newton steps
    linear : bool
        ``residual`` is linear in ``x``
    output : PolyMatrix, optional
        operator taking the spline to the reported signal
    """
    space: SplineSpace
    residual: Callable
    jacobian: Callable
    curvature: Optional[Callable] = None
    linear: bool = False
    output: Optional[PolyMatrix] = None
    labels: Optional[list] = None

    @property
    def n_unknowns(self):
        return self.space.n_unknowns

    @property
    def ncomp(self):
        return self.space.ncomp

    @classmethod
    def quadratic(cls, space, rows, **kwargs):
        A = np.vstack(rows)
        return cls(space, lambda x: A @ x, lambda x: A, linear=True, **kwargs)


def boundary_rows(space, bcs):
    """Rows imposing BoundaryValue or Condition entries on stacked spline coefficients."""
    a, b = space.interval
    rows, values = [], []
    for bc in bcs:
        if isinstance(bc, Condition):
            at, op = bc.at, bc.operator
        else:
            at = a if bc.side == "a" else b
            op = Condition.derivative(at, bc.order, bc.value, bc.component, space.ncomp).operator
        rows.append(space.operator_rows(op, [at])[0])
        values.append(bc.value)
    return np.array(rows).reshape(len(rows), space.n_unknowns), np.array(values, dtype=float)


def direct_minimize(cost, bcs, grid, x0=None, rank_rtol=RANK_RTOL, tol=BVP_RESIDUAL_TOL,
                    maxiter=ORACLE_MAXITER, verbose=False):
    """
    Minimize a discretized functional subject to boundary conditions.

    The boundary rows are eliminated with a column-pivoted QR, which also
    discards redundant rows. Quadratic functionals are solved by least
    squares; the others by Newton descent with backtracking, started from
    ``x0``, the values of a starting signal on ``grid`` (components stacked).

    Returns
    -------
    Trajectory (closed form, sampled on ``grid``) with ``report['cost']``.

    Raises
    ------
    SolverError
        the descent stagnated; ``details['best']`` holds the best coefficients
    InconsistentBoundaryError
        the boundary rows contradict each other
    """
    grid = np.asarray(grid, dtype=float)
    space = cost.space
    n = cost.n_unknowns
    G, g = boundary_rows(space, bcs)
    if len(g):
        Q, R, perm = scipy.linalg.qr(G, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > rank_rtol * diag[0]))
        qg = Q.T @ g
        if rank < len(qg) and np.max(np.abs(qg[rank:])) > tol * max(1.0, float(np.max(np.abs(g)))):
            raise InconsistentBoundaryError("boundary rows are inconsistent",
                                            residual=float(np.max(np.abs(qg[rank:]))))
    else:
        R, perm, qg, rank = np.zeros((0, n)), np.arange(n), np.zeros(0), 0
    dep, free = perm[:rank], perm[rank:]
    nf = len(free)
    # x = M theta + xc, theta the free coefficients
    M = np.zeros((n, nf))
    M[free, np.arange(nf)] = 1.0
    xc = np.zeros(n)
    if rank:
        M[dep, :] = -scipy.linalg.solve_triangular(R[:rank, :rank], R[:rank, rank:])
        xc[dep] = scipy.linalg.solve_triangular(R[:rank, :rank], qg[:rank])

    if cost.linear:
        zero = np.zeros(n)
        A = cost.jacobian(zero)
        theta = scipy.linalg.lstsq(A @ M, -(A @ xc + cost.residual(zero)))[0]
        iterations, status = 1, "direct"
    else:
        if x0 is None:
            raise SchemaError("a nonlinear functional needs a starting point")
        values = np.asarray(x0, dtype=float).reshape(space.ncomp, len(grid)).T
        B = space.design(grid)
        start = np.concatenate([scipy.linalg.lstsq(B, values[:, j])[0] for j in range(space.ncomp)])
        theta, iterations = _descend(cost, M, xc, start[free], maxiter, verbose)
        status = "converged"
    x = M @ theta + xc
    r = cost.residual(x)
    value = float(r @ r)
    if verbose:
        sys.stdout.write(f"\tdirect minimization: {nf} free coefficients, cost {value:.12g} ({status})\n")
    curve = space.curve(x)
    closed = curve if cost.output is None else _AppliedClosedForm(curve, cost.output)
    report = {"cost": value, "iterations": iterations, "status": status, "constraint_rank": rank,
              "segments": space.segments, "degree": space.degree, "unknowns": n}
    return Trajectory.from_closed_form(closed, grid, labels=cost.labels, report=report)


def _descend(cost, M, xc, theta, maxiter, verbose):
    def phi_of(th):
        r = cost.residual(M @ th + xc)
        return float(r @ r), r

    phi, r = phi_of(theta)
    for it in range(maxiter):
        x = M @ theta + xc
        J = cost.jacobian(x) @ M
        grad = 2.0 * (J.T @ r)
        H = J.T @ J
        if cost.curvature is not None:
            H = H + M.T @ cost.curvature(x, r) @ M
        try:
            step = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(H), 0.5 * grad)
        except np.linalg.LinAlgError:
            step = -scipy.linalg.lstsq(J, r)[0]
        decrement = float(-grad @ step)
        if decrement < 0:
            step = -scipy.linalg.lstsq(J, r)[0]
            decrement = float(-grad @ step)
        if decrement <= DESCENT_TOL * (1.0 + phi):
            return theta, it
        alpha = 1.0
        while alpha >= 2.0 ** -30:
            phi_new, r_new = phi_of(theta + alpha * step)
            if np.isfinite(phi_new) and phi_new <= phi - 1e-4 * alpha * decrement:
                break
            alpha /= 2
        else:
            if decrement <= DESCENT_STALL_TOL * (1.0 + phi):
                return theta, it
            raise SolverError("direct minimization stagnated", best=M @ theta + xc, cost=phi, iterations=it)
        theta = theta + alpha * step
        phi, r = phi_new, r_new
        if verbose:
            sys.stdout.write(f"\tdescent {it + 1}: step {alpha:.3g}, cost {phi:.12g}\n")
    raise SolverError("direct minimization stagnated", best=M @ theta + xc, cost=phi, iterations=maxiter)
