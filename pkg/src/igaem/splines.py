"""Univariate and tensor-product B-spline/NURBS basis evaluation and refinement.

Evaluation and derivatives follow the standard recurrence algorithms
(The NURBS Book, A2.1 and A2.3); knot refinement is repeated single-knot
(Boehm) insertion. All knot vectors are open and live on [0, 1]. The 0/0
terms that appear in the recurrence at repeated knots evaluate to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import ValidationError

MAX_DEGREE = 10


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(eq=False)
class KnotVector:
    """Open knot vector on the unit interval together with its degree.

    ``len(knots) == n + degree + 1`` where ``n`` is the number of basis
    functions. End knots repeat exactly ``degree + 1`` times, interior knots
    at most ``degree + 1`` times. Knot values are compared exactly, so the
    caller controls multiplicities by passing bit-identical values.
    Instances are immutable and safe to share.
    """

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        self.knots = _readonly(self.knots)
        p, k = self.degree, self.knots
        if not isinstance(p, (int, np.integer)) or p < 0:
            raise ValidationError(f"degree must be a non-negative integer, got {p!r}")
        if p > MAX_DEGREE:
            raise ValidationError(f"degree {p} exceeds the supported maximum {MAX_DEGREE}")
        self.degree = int(p)
        if k.ndim != 1 or len(k) < 2 * (p + 1):
            raise ValidationError("knot vector too short for an open vector of this degree")
        if np.any(np.diff(k) < 0):
            raise ValidationError("knots must be non-decreasing")
        if k[0] != 0.0 or k[-1] != 1.0:
            raise ValidationError("knot vectors must span [0, 1]")
        if not (np.all(k[: p + 1] == 0.0) and k[p + 1] > 0.0):
            raise ValidationError("first knot must have multiplicity exactly degree + 1")
        if not (np.all(k[-(p + 1):] == 1.0) and k[-(p + 2)] < 1.0):
            raise ValidationError("last knot must have multiplicity exactly degree + 1")
        interior = k[p + 1 : -(p + 1)]
        if interior.size:
            _, counts = np.unique(interior, return_counts=True)
            if np.any(counts > p + 1):
                raise ValidationError("interior knot multiplicity exceeds degree + 1")

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return len(self.knots) - self.degree - 1

    def breakpoints(self) -> np.ndarray:
        """Distinct knot values (element boundaries)."""
        return np.unique(self.knots)

    @property
    def n_elements(self) -> int:
        return len(self.breakpoints()) - 1

    def span_indices(self) -> np.ndarray:
        """Indices i of the non-empty spans [knots[i], knots[i+1])."""
        k = self.knots
        return np.nonzero(k[1:] > k[:-1])[0]

    def multiplicity(self, value: float) -> int:
        return int(np.sum(self.knots == value))

    def greville(self) -> np.ndarray:
        """Greville abscissae (anchor points) of the basis."""
        p, k = self.degree, self.knots
        if p == 0:
            return 0.5 * (k[:-1] + k[1:])
        return np.array([k[i + 1 : i + p + 1].mean() for i in range(self.n)])


@dataclass(eq=False)
class BasisValues:
    """Active-span basis table at one evaluation point.

    ``values[j, a]`` is the j-th derivative of basis function
    ``first_active + a``. Exactly ``degree + 1`` functions are active;
    all others vanish at the point.
    """

    first_active: int
    values: np.ndarray


@dataclass(eq=False)
class TensorBasisSpec:
    """Tensor-product spline space: one knot vector per parametric direction."""

    kvs: tuple[KnotVector, ...]

    def __post_init__(self):
        self.kvs = tuple(self.kvs)
        if not 1 <= len(self.kvs) <= 3:
            raise ValidationError("tensor basis supports 1 to 3 directions")

    @property
    def ndim(self) -> int:
        return len(self.kvs)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(kv.n for kv in self.kvs)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(kv.degree for kv in self.kvs)


@dataclass(eq=False)
class TensorBasisValues:
    """Active tensor-product values; ``tables[alpha]`` holds the mixed partial
    of multi-order ``alpha`` for the active functions, shaped (p1+1, ..., pd+1)."""

    first_active: tuple[int, ...]
    tables: dict[tuple[int, ...], np.ndarray]


def find_span(kv: KnotVector, xi: float) -> int:
    """Index i with knots[i] <= xi < knots[i+1]; xi = 1 maps to the last span."""
    xi = float(xi)
    if not 0.0 <= xi <= 1.0:
        raise ValidationError(f"parameter {xi} outside [0, 1]")
    n, p, knots = kv.n, kv.degree, kv.knots
    if xi >= knots[n]:
        return n - 1
    lo, hi = p, n
    mid = (lo + hi) // 2
    while xi < knots[mid] or xi >= knots[mid + 1]:
        if xi < knots[mid]:
            hi = mid
        else:
            lo = mid
        mid = (lo + hi) // 2
    return mid


def _ders_basis(span: int, u: float, p: int, nd: int, U: np.ndarray) -> np.ndarray:
    # The NURBS Book, algorithm A2.3 (zero-based indices).
    ndu = np.ones((p + 1, p + 1))
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    for j in range(1, p + 1):
        left[j] = u - U[span + 1 - j]
        right[j] = U[span + j] - u
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((nd + 1, p + 1))
    ders[0] = ndu[:, p]
    for r in range(p + 1):
        s1, s2 = 0, 1
        a = np.zeros((2, p + 1))
        a[0, 0] = 1.0
        for k in range(1, nd + 1):
            d = 0.0
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    fac = float(p)
    for k in range(1, nd + 1):
        ders[k] *= fac
        fac *= p - k
    return ders


def eval_bspline(kv: KnotVector, xi: float, max_deriv: int = 0) -> BasisValues:
    """Values and derivatives of the active B-splines at ``xi``.

    Row j of the result holds j-th derivatives. Derivatives of order above
    the degree are identically zero.
    """
    if max_deriv < 0:
        raise ValidationError("max_deriv must be non-negative")
    span = find_span(kv, xi)
    p = kv.degree
    nd = min(max_deriv, p)
    ders = _ders_basis(span, float(xi), p, nd, kv.knots)
    values = np.zeros((max_deriv + 1, p + 1))
    values[: nd + 1] = ders
    return BasisValues(first_active=span - p, values=values)


def eval_nurbs(kv: KnotVector, weights, xi: float, max_deriv: int = 0) -> BasisValues:
    """Rational basis N_i = w_i B_i / sum_j w_j B_j with derivatives.

    Higher derivatives come from the generalized quotient rule applied to
    the weighted numerator and the weight function.
    """
    weights = np.asarray(weights, float)
    if weights.shape != (kv.n,):
        raise ValidationError("weights length must equal the number of basis functions")
    if np.any(weights <= 0.0):
        raise ValidationError("NURBS weights must be positive")
    bas = eval_bspline(kv, xi, max_deriv)
    w_act = weights[bas.first_active : bas.first_active + kv.degree + 1]
    num = bas.values * w_act          # weighted numerators and their derivatives
    wfun = num.sum(axis=1)            # weight function derivatives
    vals = np.zeros_like(num)
    for k in range(max_deriv + 1):
        v = num[k].copy()
        for j in range(1, k + 1):
            v -= math.comb(k, j) * wfun[j] * vals[k - j]
        vals[k] = v / wfun[0]
    return BasisValues(bas.first_active, vals)


def insert_knot(kv: KnotVector, u: float) -> tuple[KnotVector, np.ndarray]:
    """Single Boehm insertion. Returns the refined vector and the (n+1) x n
    coefficient transfer matrix."""
    u = float(u)
    if not 0.0 < u < 1.0:
        raise ValidationError("new knots must lie strictly inside (0, 1)")
    if kv.multiplicity(u) >= kv.degree + 1:
        raise ValidationError("insertion would exceed multiplicity degree + 1")
    p, U, n = kv.degree, kv.knots, kv.n
    k = find_span(kv, u)
    T = np.zeros((n + 1, n))
    for i in range(n + 1):
        if i <= k - p:
            T[i, i] = 1.0
        elif i <= k:
            alpha = (u - U[i]) / (U[i + p] - U[i])
            T[i, i] = alpha
            T[i, i - 1] = 1.0 - alpha
        else:
            T[i, i - 1] = 1.0
    return KnotVector(np.insert(U, k + 1, u), p), T


def refine_knots(kv: KnotVector, new_knots) -> tuple[KnotVector, np.ndarray]:
    """Insert ``new_knots`` (sorted ascending) and return the refined vector
    plus the n_new x n_old transfer matrix T.

    A curve with coefficients P over ``kv`` has identical geometry with
    coefficients T @ P over the refined vector.
    """
    new_knots = np.atleast_1d(np.asarray(new_knots, float))
    if new_knots.size == 0:
        return kv, np.eye(kv.n)
    vals, counts = np.unique(new_knots, return_counts=True)
    for u, c in zip(vals, counts):
        if not 0.0 < u < 1.0:
            raise ValidationError("new knots must lie strictly inside (0, 1)")
        if kv.multiplicity(u) + c > kv.degree + 1:
            raise ValidationError("insertion would exceed multiplicity degree + 1")
    out = kv
    T = np.eye(kv.n)
    for u in np.sort(new_knots):
        out, Ti = insert_knot(out, u)
        T = Ti @ T
    return out, T


def derivative_orders(ndim: int, max_deriv: int) -> list[tuple[int, ...]]:
    """All mixed-partial multi-orders with total order <= max_deriv."""
    return [a for a in product(range(max_deriv + 1), repeat=ndim) if sum(a) <= max_deriv]


def eval_tensor(spec: TensorBasisSpec, xi, max_deriv: int = 0) -> TensorBasisValues:
    """Active tensor-product values and mixed partials at a point of the cube."""
    xi = np.atleast_1d(np.asarray(xi, float))
    if xi.shape != (spec.ndim,):
        raise ValidationError(f"expected a point with {spec.ndim} coordinates, got shape {xi.shape}")
    uni = [eval_bspline(kv, x, max_deriv) for kv, x in zip(spec.kvs, xi)]
    tables = {}
    for alpha in derivative_orders(spec.ndim, max_deriv):
        arr = uni[0].values[alpha[0]]
        for d in range(1, spec.ndim):
            arr = np.multiply.outer(arr, uni[d].values[alpha[d]])
        tables[alpha] = arr
    return TensorBasisValues(tuple(b.first_active for b in uni), tables)


def make_open_knots(degree: int, breakpoints) -> KnotVector:
    """Open knot vector of maximal interior smoothness over given breakpoints."""
    b = np.unique(np.asarray(breakpoints, float))
    if b[0] != 0.0 or b[-1] != 1.0:
        raise ValidationError("breakpoints must start at 0 and end at 1")
    knots = np.concatenate([np.zeros(degree + 1), b[1:-1], np.ones(degree + 1)])
    return KnotVector(knots, degree)


def subdivision_knots(kv: KnotVector, count: int) -> np.ndarray:
    """Knots that split every non-empty span into ``count`` equal parts."""
    if count < 1:
        raise ValidationError("subdivision count must be >= 1")
    b = kv.breakpoints()
    out = []
    for a, c in zip(b[:-1], b[1:]):
        out.extend(a + (c - a) * j / count for j in range(1, count))
    return np.asarray(out)


def collocation(kv: KnotVector, points, max_deriv: int = 0) -> np.ndarray:
    """Dense table of shape (max_deriv+1, npoints, n) with basis derivatives."""
    pts = np.atleast_1d(np.asarray(points, float))
    out = np.zeros((max_deriv + 1, len(pts), kv.n))
    for q, x in enumerate(pts):
        b = eval_bspline(kv, x, max_deriv)
        out[:, q, b.first_active : b.first_active + kv.degree + 1] = b.values
    return out
