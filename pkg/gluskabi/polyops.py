"""
Exact algebra of polynomials and polynomial matrices in one indeterminate.

Coefficients are ``fractions.Fraction`` throughout; floating point only
enters downstream in :mod:`gluskabi.odesolve`. The indeterminate is written
``ξ`` and stands for the differentiation operator ``D`` when a polynomial is
used as an operator, so operator composition is polynomial multiplication.

Example
-------
>>> xi = Polynomial.xi()
>>> (xi + 1) * (xi - 1)
Polynomial('ξ² - 1')
>>> U = unimodular_completion(PolyMatrix([[1]]), PolyMatrix([[xi + 1]]))
>>> PolyMatrix([[1, xi + 1]]) * U == PolyMatrix([[1, 0]])
True
"""
import itertools
import sys
import warnings
from fractions import Fraction
from functools import reduce

import numpy as np

from .exceptions import (DegreeCapExceeded, DimensionError, ExperimentalWarning,
                         NotCoprimeError, NotMinimalError, SchemaError,
                         ZeroPolynomialError)

DEGREE_CAP = 64

_SUPERSCRIPTS = str.maketrans("0123456789", "⁰¹²³⁴⁵⁶⁷⁸⁹")


def as_rational(x):
    """
    Read a number as an exact rational.

    Integers and Fractions are taken as they are, strings may be ``"num/den"``
    or decimals (``"0.25"``, ``"1e-3"``), floats are read through their
    shortest decimal representation so ``0.1`` becomes ``1/10``.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (bool, np.bool_)):
        raise SchemaError(f"boolean {x!r} is not a coefficient")
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        if not np.isfinite(x):
            raise SchemaError(f"non-finite coefficient {x!r}")
        return Fraction(repr(float(x)))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError):
            raise SchemaError(f"cannot read {x!r} as a rational number")
    raise SchemaError(f"cannot read {x!r} as a rational number")


class Polynomial():
    """
    Polynomial with exact rational coefficients, immutable.

    Attributes
    ----------
    coeffs : tuple of Fraction
        ascending coefficients, ``coeffs[i]`` multiplies ``ξ**i``. The
        canonical zero polynomial has no coefficients.
    """
    __slots__ = ("_coeffs",)

    def __init__(self, coeffs=()):
        if isinstance(coeffs, Polynomial):
            c = list(coeffs.coeffs)
        elif isinstance(coeffs, (int, float, str, Fraction, np.number)):
            c = [as_rational(coeffs)]
        else:
            c = [as_rational(x) for x in coeffs]
        while c and c[-1] == 0:
            c.pop()
        self._coeffs = tuple(c)

    @classmethod
    def constant(cls, c):
        return cls([c])

    @classmethod
    def monomial(cls, i, c=1):
        return cls([0] * i + [c])

    @classmethod
    def xi(cls):
        return cls([0, 1])

    @property
    def coeffs(self):
        return self._coeffs

    @property
    def degree(self):
        """Degree, ``-1`` for the zero polynomial."""
        return len(self._coeffs) - 1

    @property
    def lead(self):
        return self._coeffs[-1] if self._coeffs else Fraction(0)

    def is_zero(self):
        return not self._coeffs

    def is_constant(self):
        """True for nonzero constants."""
        return self.degree == 0

    def __bool__(self):
        return not self.is_zero()

    def __getitem__(self, i):
        return self._coeffs[i] if 0 <= i < len(self._coeffs) else Fraction(0)

    @staticmethod
    def _coerce(other):
        if isinstance(other, Polynomial):
            return other
        if isinstance(other, (int, Fraction, np.integer)):
            return Polynomial([other])
        return None

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        n = max(len(self._coeffs), len(other._coeffs))
        return Polynomial([self[i] + other[i] for i in range(n)])

    __radd__ = __add__

    def __neg__(self):
        return Polynomial([-c for c in self._coeffs])

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, PolyMatrix):
            return NotImplemented
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        if self.is_zero() or other.is_zero():
            return Polynomial()
        out = [Fraction(0)] * (len(self._coeffs) + len(other._coeffs) - 1)
        for i, a in enumerate(self._coeffs):
            if a == 0:
                continue
            for j, b in enumerate(other._coeffs):
                out[i + j] += a * b
        return Polynomial(out)

    __rmul__ = __mul__

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("Exponent must be a nonnegative integer")
        out = Polynomial([1])
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __truediv__(self, c):
        """Division by a nonzero scalar."""
        c = as_rational(c)
        if c == 0:
            raise ZeroDivisionError("division of a polynomial by zero")
        return Polynomial([a / c for a in self._coeffs])

    def __divmod__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        if other.is_zero():
            raise ZeroPolynomialError("polynomial division by the zero polynomial")
        r = list(self._coeffs)
        od = other.degree
        q = [Fraction(0)] * max(len(r) - od, 0)
        inv_lead = 1 / other.lead
        for k in range(len(r) - 1, od - 1, -1):
            c = r[k] * inv_lead
            if c == 0:
                continue
            q[k - od] = c
            for j, b in enumerate(other._coeffs):
                r[k - od + j] -= c * b
        return Polynomial(q), Polynomial(r[:od] if od > 0 else [])

    def __floordiv__(self, other):
        return divmod(self, other)[0]

    def __mod__(self, other):
        return divmod(self, other)[1]

    def __eq__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self._coeffs == other._coeffs

    def __hash__(self):
        return hash(("Polynomial", self._coeffs))

    def __call__(self, x):
        """Exact for ints and Fractions, numpy ``polyval`` otherwise (floats, complex, arrays)."""
        if isinstance(x, (int, Fraction)):
            return reduce(lambda acc, c: acc * x + c, reversed(self._coeffs), Fraction(0))
        if self.is_zero():
            return np.zeros_like(x, dtype=np.result_type(x, float))
        return np.polynomial.polynomial.polyval(x, self.to_numpy())

    def adjoint(self):
        """The formal adjoint ``p(-ξ)`` of a scalar operator."""
        return Polynomial([c if i % 2 == 0 else -c for i, c in enumerate(self._coeffs)])

    def derivative(self):
        return Polynomial([i * c for i, c in enumerate(self._coeffs)][1:])

    def monic(self):
        if self.is_zero():
            raise ZeroPolynomialError("the zero polynomial has no monic form")
        return self / self.lead

    def compose(self, other):
        """``self(other(ξ))``."""
        other = Polynomial(other)
        out = Polynomial()
        for c in reversed(self._coeffs):
            out = out * other + c
        return out

    def to_numpy(self):
        """Float coefficients, ascending."""
        return np.array([float(c) for c in self._coeffs], dtype=float)

    def __str__(self):
        if self.is_zero():
            return "0"
        terms = []
        for i in range(self.degree, -1, -1):
            c = self._coeffs[i]
            if c == 0:
                continue
            mag = abs(c)
            if i == 0:
                body = f"{mag}"
            else:
                power = "ξ" if i == 1 else "ξ" + str(i).translate(_SUPERSCRIPTS)
                if mag == 1:
                    body = power
                elif mag.denominator == 1:
                    body = f"{mag}{power}"
                else:
                    body = f"({mag}){power}"
            sign = "-" if c < 0 else "+"
            terms.append((sign, body))
        first_sign, first = terms[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, body in terms[1:]:
            out += f" {sign} {body}"
        return out

    def __repr__(self):
        return f"Polynomial('{self}')"


class PolyMatrix():
    """
    Rectangular matrix of :class:`Polynomial` entries, immutable.

    Entries may be given as polynomials, rationals or ascending coefficient
    lists; scalars and polynomials multiply entry-wise.
    """
    __slots__ = ("_entries", "rows", "cols")

    def __init__(self, entries):
        grid = []
        for row in entries:
            grid.append(tuple(e if isinstance(e, Polynomial) else Polynomial(e) for e in row))
        if not grid or not grid[0]:
            raise DimensionError("a polynomial matrix needs positive dimensions")
        if any(len(r) != len(grid[0]) for r in grid):
            raise DimensionError("ragged rows in polynomial matrix")
        self._entries = tuple(grid)
        self.rows = len(grid)
        self.cols = len(grid[0])

    @classmethod
    def identity(cls, n):
        return cls([[1 if i == j else 0 for j in range(n)] for i in range(n)])

    @classmethod
    def zeros(cls, rows, cols):
        return cls([[0] * cols for _ in range(rows)])

    @classmethod
    def diag(cls, entries):
        n = len(entries)
        return cls([[entries[i] if i == j else 0 for j in range(n)] for i in range(n)])

    @classmethod
    def scalar(cls, p):
        return cls([[p]])

    @classmethod
    def hstack(cls, *mats):
        if len({m.rows for m in mats}) != 1:
            raise DimensionError("hstack needs equal row counts")
        return cls([sum((m._entries[i] for m in mats), ()) for i in range(mats[0].rows)])

    @classmethod
    def vstack(cls, *mats):
        if len({m.cols for m in mats}) != 1:
            raise DimensionError("vstack needs equal column counts")
        return cls([row for m in mats for row in m._entries])

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def degree(self):
        return max(e.degree for row in self._entries for e in row)

    def is_square(self):
        return self.rows == self.cols

    def __getitem__(self, key):
        i, j = key
        if isinstance(i, int) and isinstance(j, int):
            return self._entries[i][j]
        ri = range(self.rows)[i] if isinstance(i, slice) else [i]
        cj = range(self.cols)[j] if isinstance(j, slice) else [j]
        return PolyMatrix([[self._entries[r][c] for c in cj] for r in ri])

    def entries(self):
        return [list(r) for r in self._entries]

    def to_scalar(self):
        if self.shape != (1, 1):
            raise DimensionError(f"expected a 1x1 matrix, got {self.shape}")
        return self._entries[0][0]

    def map(self, f):
        return PolyMatrix([[f(e) for e in row] for row in self._entries])

    def __add__(self, other):
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        if self.shape != other.shape:
            raise DimensionError(f"cannot add {self.shape} and {other.shape}")
        return PolyMatrix([[a + b for a, b in zip(r, s)]
                           for r, s in zip(self._entries, other._entries)])

    def __neg__(self):
        return self.map(lambda e: -e)

    def __sub__(self, other):
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, PolyMatrix):
            if self.cols != other.rows:
                raise DimensionError(f"cannot multiply {self.shape} by {other.shape}")
            return PolyMatrix([[reduce(lambda acc, k: acc + self._entries[i][k] * other._entries[k][j],
                                       range(self.cols), Polynomial())
                                for j in range(other.cols)] for i in range(self.rows)])
        if isinstance(other, (Polynomial, int, Fraction)):
            return self.map(lambda e: e * other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (Polynomial, int, Fraction)):
            return self.map(lambda e: other * e)
        return NotImplemented

    def __eq__(self, other):
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        return self._entries == other._entries

    def __hash__(self):
        return hash(("PolyMatrix", self._entries))

    def adjoint(self):
        """``M*(ξ) = M(-ξ)ᵀ``."""
        return PolyMatrix([[self._entries[i][j].adjoint() for i in range(self.rows)]
                           for j in range(self.cols)])

    def det(self):
        """Determinant by fraction-free (Bareiss) elimination over Q[ξ]."""
        if not self.is_square():
            raise DimensionError(f"determinant of a non-square {self.shape} matrix")
        n = self.rows
        m = [list(r) for r in self._entries]
        sign, prev = 1, Polynomial([1])
        for k in range(n - 1):
            if m[k][k].is_zero():
                swap = next((i for i in range(k + 1, n) if not m[i][k].is_zero()), None)
                if swap is None:
                    return Polynomial()
                m[k], m[swap] = m[swap], m[k]
                sign = -sign
            for i in range(k + 1, n):
                for j in range(k + 1, n):
                    q, r = divmod(m[i][j] * m[k][k] - m[i][k] * m[k][j], prev)
                    assert r.is_zero()
                    m[i][j] = q
            prev = m[k][k]
        return m[n - 1][n - 1] * sign

    def minors(self, k):
        """All ``k x k`` minors as ``((rows, cols), det)`` pairs."""
        out = []
        for ri in itertools.combinations(range(self.rows), k):
            for cj in itertools.combinations(range(self.cols), k):
                sub = PolyMatrix([[self._entries[r][c] for c in cj] for r in ri])
                out.append(((ri, cj), sub.det()))
        return out

    def __str__(self):
        return "[" + "; ".join(", ".join(str(e) for e in row) for row in self._entries) + "]"

    def __repr__(self):
        return f"PolyMatrix('{self}')"


def adjoint(M):
    """Formal adjoint of a polynomial or polynomial matrix."""
    return M.adjoint()


def ext_gcd(p, q):
    """
    Extended Euclid over Q[ξ].

    Returns
    -------
    (g, alpha, beta) with g monic and ``alpha*p + beta*q == g``.
    """
    p, q = Polynomial(p), Polynomial(q)
    if p.is_zero() and q.is_zero():
        raise ZeroPolynomialError("gcd of two zero polynomials is undefined")
    old_r, r = p, q
    old_s, s = Polynomial([1]), Polynomial()
    old_t, t = Polynomial(), Polynomial([1])
    while not r.is_zero():
        quo, rem = divmod(old_r, r)
        old_r, r = r, rem
        old_s, s = s, old_s - quo * s
        old_t, t = t, old_t - quo * t
    lead = old_r.lead
    return old_r / lead, old_s / lead, old_t / lead


def gcd_many(polys):
    """Monic gcd of a collection with at least one nonzero entry."""
    nonzero = [Polynomial(p) for p in polys if not Polynomial(p).is_zero()]
    if not nonzero:
        raise ZeroPolynomialError("gcd of zero polynomials is undefined")
    return reduce(lambda a, b: ext_gcd(a, b)[0], nonzero[1:], nonzero[0].monic())


def _as_matrix(M):
    if isinstance(M, PolyMatrix):
        return M
    if isinstance(M, Polynomial):
        return PolyMatrix.scalar(M)
    if isinstance(M, (int, Fraction, str, float)):
        return PolyMatrix.scalar(Polynomial(M))
    return PolyMatrix(M)


def controllability_report(P, N):
    """
    Minors and their gcd for the matrix ``[P  -N]``.

    Returns
    -------
    dict with keys ``minors`` (list of Polynomial), ``gcd`` and ``controllable``.
    """
    P, N = _as_matrix(P), _as_matrix(N)
    if P.rows != N.rows:
        raise DimensionError(f"P has {P.rows} rows but N has {N.rows}")
    M = PolyMatrix.hstack(P, -N)
    minors = [m for _, m in M.minors(M.rows)]
    if all(m.is_zero() for m in minors):
        raise NotMinimalError("all maximal minors of [P -N] vanish identically",
                              shape=M.shape)
    g = gcd_many(minors)
    return {"minors": minors, "gcd": g, "controllable": g == 1}


def controllability_check(P, N):
    """True iff ``[P -N]`` has full row rank at every complex frequency."""
    return controllability_report(P, N)["controllable"]


def is_unimodular(U):
    """True iff ``det U`` is a nonzero constant."""
    U = _as_matrix(U)
    if not U.is_square():
        raise DimensionError(f"unimodularity of a non-square {U.shape} matrix")
    return U.det().is_constant()


def is_proper(P, N):
    """
    Properness of ``P⁻¹N`` by Cramer's rule: every minor of ``[P N]`` obtained by
    replacing one column of ``P`` with a column of ``N`` has degree at most
    ``deg det P``.
    """
    P, N = _as_matrix(P), _as_matrix(N)
    d = P.det()
    if d.is_zero():
        return False
    for j in range(N.cols):
        for i in range(P.cols):
            cols = [N[:, j] if c == i else P[:, c] for c in range(P.cols)]
            if PolyMatrix.hstack(*cols).det().degree > d.degree:
                return False
    return True


def unimodular_completion(N, P, degree_cap=DEGREE_CAP, verbose=False):
    """
    Unimodular ``U`` with ``[N P] U = [I O]``.

    Euclidean column reduction of ``[N P]`` to ``[H O]``, every elementary
    column operation accumulated into ``U``; ``H`` is lower triangular and,
    when ``P`` and ``N`` are left coprime, has constant diagonal, so it is
    inverted exactly and folded into the first ``g`` columns.

    Parameters
    ----------
    N : PolyMatrix
        g x (q-g)
    P : PolyMatrix
        g x g with ``det P`` not identically zero
    degree_cap : int
        abort when an entry of ``U`` exceeds this degree
    verbose : bool
        write status updates to sys.stdout if True

    Returns
    -------
    PolyMatrix
        q x q, blocks ``[[U11, U12], [U21, U22]]`` split after row ``q-g`` and
        column ``g`` (see :func:`partition_completion`).
    """
    N, P = _as_matrix(N), _as_matrix(P)
    if not P.is_square() or N.rows != P.rows:
        raise DimensionError(f"incompatible shapes N {N.shape}, P {P.shape}")
    if P.det().is_zero():
        raise NotMinimalError("det P is identically zero")
    g, q = P.rows, P.rows + N.cols
    if g > 1:
        warnings.warn(f"MIMO completion (g={g}) is best-effort", ExperimentalWarning)
    M = PolyMatrix.hstack(N, P)
    # work on lists of columns; values themselves stay immutable
    work = [[M[i, j] for i in range(g)] for j in range(q)]
    ucols = [[Polynomial([1 if i == j else 0]) for i in range(q)] for j in range(q)]
    steps = 0
    for i in range(g):
        while True:
            nz = [j for j in range(i, q) if not work[j][i].is_zero()]
            if not nz:
                raise NotCoprimeError(f"row {i} of [N P] reduces to zero", row=i)
            p = min(nz, key=lambda j: (work[j][i].degree, j))
            others = [j for j in nz if j != p]
            if not others:
                break
            for j in others:
                quo = work[j][i] // work[p][i]
                work[j] = [a - quo * b for a, b in zip(work[j], work[p])]
                ucols[j] = [a - quo * b for a, b in zip(ucols[j], ucols[p])]
                steps += 1
                worst = max(e.degree for e in ucols[j])
                if worst > degree_cap:
                    raise DegreeCapExceeded(f"completion degree {worst} exceeds cap {degree_cap}",
                                            degree=worst, cap=degree_cap)
        if p != i:
            # determinant-preserving swap
            work[i], work[p] = work[p], [-e for e in work[i]]
            ucols[i], ucols[p] = ucols[p], [-e for e in ucols[i]]
    H = [[work[c][r] for c in range(g)] for r in range(g)]
    for r in range(g):
        if not H[r][r].is_constant():
            raise NotCoprimeError("P and N are not left coprime", common_factor=str(H[r][r].monic()))
    # exact inverse of the lower triangular H
    X = [[Polynomial() for _ in range(g)] for _ in range(g)]
    for c in range(g):
        X[c][c] = Polynomial([1 / H[c][c].lead])
        for r in range(c + 1, g):
            acc = reduce(lambda s, l: s + H[r][l] * X[l][c], range(c, r), Polynomial())
            X[r][c] = -acc / H[r][r].lead
    first = [[reduce(lambda s, l: s + ucols[l][row] * X[l][c], range(g), Polynomial())
              for row in range(q)] for c in range(g)]
    cols = first + ucols[g:]
    if verbose:
        sys.stdout.write(f"\tunimodular completion: {steps} column operations, "
                         f"max degree {max(e.degree for col in cols for e in col)}\n")
    return PolyMatrix([[cols[c][r] for c in range(q)] for r in range(q)])


def partition_completion(U, g):
    """Split ``U`` into the blocks ``U11, U12, U21, U22`` (rows at ``q-g``, columns at ``g``)."""
    m = U.rows - g
    return {"U11": U[:m, :g], "U12": U[:m, g:], "U21": U[m:, :g], "U22": U[m:, g:]}
