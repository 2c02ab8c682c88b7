"""Element-loop Galerkin assembly on the spline mesh.

Gauss-Legendre quadrature uses degree+1 points per direction on every
non-empty knot span. Matrices are accumulated as triplets per element and
compressed at the end; the element loop runs in a fixed sequential order,
so repeated runs produce bitwise-identical matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import SingularMappingError, ValidationError
from .geometry import map_values
from .spaces import DiscreteSpace


@dataclass(eq=False)
class QuadratureRule:
    """Per-direction Gauss-Legendre data grouped by span: nodes[d] and
    weights[d] have shape (nspans_d, npts_d)."""

    nodes: tuple[np.ndarray, ...]
    weights: tuple[np.ndarray, ...]

    @property
    def nspans(self) -> tuple[int, ...]:
        return tuple(n.shape[0] for n in self.nodes)

    @property
    def npts(self) -> tuple[int, ...]:
        return tuple(n.shape[1] for n in self.nodes)

    def flat_nodes(self, axis: int) -> np.ndarray:
        return self.nodes[axis].ravel()


def gauss_spans(breaks: np.ndarray, npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights mapped to each interval of ``breaks``."""
    if npts < 1:
        raise ValidationError("quadrature needs at least one point per span")
    t, w = np.polynomial.legendre.leggauss(npts)
    a = breaks[:-1][:, None]
    b = breaks[1:][:, None]
    return a + (b - a) * 0.5 * (t + 1.0), (b - a) * 0.5 * w


def make_rule(space: DiscreteSpace, npts=None) -> QuadratureRule:
    """Assembly rule for a space: degree+1 points per direction by default."""
    base = space.component_specs[0]
    nodes, weights = [], []
    for ax in range(space.ndim):
        breaks = base.kvs[ax].breakpoints()
        n = space.degrees[ax] + 1 if npts is None else (
            npts[ax] if not np.isscalar(npts) else int(npts)
        )
        x, w = gauss_spans(breaks, n)
        nodes.append(x)
        weights.append(w)
    return QuadratureRule(tuple(nodes), tuple(weights))


# ---------------------------------------------------------------------------
# Cached geometry and basis tables at the quadrature grid
# ---------------------------------------------------------------------------

class _GeometryTables:
    def __init__(self, space: DiscreteSpace, rule: QuadratureRule):
        patch = space.patch
        if patch.ndim != patch.phys_dim:
            raise ValidationError("assembly requires a square (volume) mapping")
        axes = [rule.flat_nodes(ax) for ax in range(space.ndim)]
        vals = map_values(patch, axes, 1)
        det = vals["det"]
        if det.min() <= 1e-14:
            pos = np.unravel_index(int(np.argmin(det)), det.shape)
            xi = tuple(float(axes[ax][pos[ax]]) for ax in range(space.ndim))
            name = f" {patch.label!r}" if patch.label else ""
            raise SingularMappingError(
                f"singular mapping on patch{name} at quadrature point xi={xi}: det={det.min():.3e}"
            )
        self.F = vals["F"]
        self.det = det
        DF = vals["DF"]
        self.G = np.einsum("...ca,...cb->...ab", DF, DF)
        self.Ginv = np.linalg.inv(self.G)
        self.npts = rule.npts

    def element(self, e: tuple[int, ...], name: str) -> np.ndarray:
        arr = getattr(self, name)
        sl = tuple(slice(i * n, (i + 1) * n) for i, n in zip(e, self.npts))
        block = arr[sl]
        extra = arr.shape[len(e):]
        return block.reshape((-1,) + extra, order="F")


class _BasisTables:
    """Per-direction span tables of active basis values and derivatives."""

    def __init__(self, space: DiscreteSpace, rule: QuadratureRule, max_deriv: int):
        from .splines import eval_bspline, find_span

        self.space = space
        self.max_deriv = max_deriv
        self.tables = []       # [comp][axis] -> (nspans, max_deriv+1, p_c+1, nq)
        self.first_active = []  # [comp][axis] -> (nspans,)
        base = space.component_specs[0]
        for comp in space.component_specs:
            per_axis_tab, per_axis_fa = [], []
            for ax in range(space.ndim):
                kv = comp.kvs[ax]
                nodes = rule.nodes[ax]
                nspans, nq = nodes.shape
                tab = np.zeros((nspans, max_deriv + 1, kv.degree + 1, nq))
                fa = np.zeros(nspans, dtype=int)
                for s in range(nspans):
                    fa[s] = find_span(kv, nodes[s, 0]) - kv.degree
                    for q in range(nq):
                        b = eval_bspline(kv, nodes[s, q], max_deriv)
                        tab[s, :, :, q] = b.values
                per_axis_tab.append(tab)
                per_axis_fa.append(fa)
            self.tables.append(per_axis_tab)
            self.first_active.append(per_axis_fa)
        del base

    def _product(self, rows: list[np.ndarray]) -> np.ndarray:
        # rows[ax]: (p_ax+1, nq_ax) -> (nloc, nq) flattened first-index-fastest
        if len(rows) == 1:
            return rows[0]
        if len(rows) == 2:
            arr = np.einsum("aq,br->abqr", rows[0], rows[1])
        else:
            arr = np.einsum("aq,br,cs->abcqrs", rows[0], rows[1], rows[2])
        nloc = int(np.prod([r.shape[0] for r in rows]))
        nq = int(np.prod([r.shape[1] for r in rows]))
        return arr.reshape(nloc, nq, order="F")

    def values(self, comp: int, e: tuple[int, ...], derivs: tuple[int, ...]) -> np.ndarray:
        rows = [
            self.tables[comp][ax][e[ax], derivs[ax]] for ax in range(self.space.ndim)
        ]
        return self._product(rows)

    def global_indices(self, comp: int, e: tuple[int, ...]) -> np.ndarray:
        spec = self.space.component_specs[comp]
        dims = spec.dims
        strides = np.cumprod([1] + list(dims[:-1]))
        idx = None
        for ax in range(self.space.ndim):
            fa = self.first_active[comp][ax][e[ax]]
            local = (fa + np.arange(spec.kvs[ax].degree + 1)) * strides[ax]
            idx = local if idx is None else np.add.outer(idx, local)
        return self.space.offsets[comp] + idx.reshape(-1, order="F")


def _element_ids(rule: QuadratureRule, element_order=None):
    shape = rule.nspans
    total = int(np.prod(shape))
    order = range(total) if element_order is None else element_order
    for flat in order:
        yield np.unravel_index(int(flat), shape, order="F")


def _coefficient_values(coeff, points: np.ndarray) -> np.ndarray:
    if callable(coeff):
        return np.asarray(coeff(points), float)
    return np.full(points.shape[0], float(coeff))


def _element_weights(rule: QuadratureRule, e) -> np.ndarray:
    ws = [rule.weights[ax][e[ax]] for ax in range(len(e))]
    arr = ws[0]
    for w in ws[1:]:
        arr = np.multiply.outer(arr, w)
    return arr.reshape(-1, order="F")


class _TripletAccumulator:
    def __init__(self, n: int):
        self.n = n
        self.rows, self.cols, self.vals = [], [], []

    def add(self, gi: np.ndarray, gj: np.ndarray, local: np.ndarray):
        self.rows.append(np.repeat(gi, len(gj)))
        self.cols.append(np.tile(gj, len(gi)))
        self.vals.append(local.ravel())

    def tocsr(self) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix((self.n, self.n))
        A = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.n, self.n),
        )
        return A.tocsr()


def _check_positive(name: str, values: np.ndarray):
    if np.any(values <= 0.0):
        raise ValidationError(f"{name} must be positive on the whole patch")


def op_u_v(space: DiscreteSpace, coefficient=1.0, element_order=None) -> sp.csr_matrix:
    """Mass matrix M_ij = int c φ_i . φ_j dΩ for kind 0 or kind 1 spaces."""
    if space.kind not in (0, 1):
        raise ValidationError("op_u_v supports space kinds 0 and 1")
    rule = make_rule(space)
    geo = _GeometryTables(space, rule)
    bas = _BasisTables(space, rule, 0)
    acc = _TripletAccumulator(space.dof_count)
    zero = (0,) * space.ndim
    for e in _element_ids(rule, element_order):
        w = _element_weights(rule, e)
        det = geo.element(e, "det")
        c = _coefficient_values(coefficient, geo.element(e, "F"))
        _check_positive("mass coefficient", c)
        wdet = w * det * c
        if space.kind == 0:
            V = bas.values(0, e, zero)
            gi = bas.global_indices(0, e)
            acc.add(gi, gi, np.einsum("iq,jq,q->ij", V, V, wdet))
        else:
            ginv = geo.element(e, "Ginv")
            Vs = [bas.values(c_, e, zero) for c_ in range(space.n_components)]
            gis = [bas.global_indices(c_, e) for c_ in range(space.n_components)]
            for a in range(space.n_components):
                for b in range(a, space.n_components):
                    blk = np.einsum("iq,jq,q->ij", Vs[a], Vs[b], ginv[:, a, b] * wdet)
                    acc.add(gis[a], gis[b], blk)
                    if b > a:
                        acc.add(gis[b], gis[a], blk.T)
    return acc.tocsr()


def op_gradu_gradv(space: DiscreteSpace, nu=1.0, element_order=None) -> sp.csr_matrix:
    """Stiffness matrix K_ij = int nu grad φ_i . grad φ_j dΩ (kind 0)."""
    if space.kind != 0:
        raise ValidationError("op_gradu_gradv needs a kind-0 space")
    rule = make_rule(space)
    geo = _GeometryTables(space, rule)
    bas = _BasisTables(space, rule, 1)
    acc = _TripletAccumulator(space.dof_count)
    d = space.ndim
    for e in _element_ids(rule, element_order):
        w = _element_weights(rule, e)
        det = geo.element(e, "det")
        nu_q = _coefficient_values(nu, geo.element(e, "F"))
        _check_positive("reluctivity/diffusivity", nu_q)
        wdet = w * det * nu_q
        ginv = geo.element(e, "Ginv")
        dV = [
            bas.values(0, e, tuple(1 if a == ax else 0 for a in range(d)))
            for ax in range(d)
        ]
        gi = bas.global_indices(0, e)
        local = np.zeros((len(gi), len(gi)))
        for a in range(d):
            for b in range(d):
                local += np.einsum("iq,jq,q->ij", dV[a], dV[b], ginv[:, a, b] * wdet)
        acc.add(gi, gi, local)
    return acc.tocsr()


def _curl_components_2d(bas: _BasisTables, e) -> list[np.ndarray]:
    # scalar curl of (f, 0) is -d f/d xi2; of (0, f) is +d f/d xi1
    c0 = -bas.values(0, e, (0, 1))
    c1 = bas.values(1, e, (1, 0))
    return [c0, c1]


def _curl_components_3d(bas: _BasisTables, e) -> list[np.ndarray]:
    # curl of f e_1 = (0, d3 f, -d2 f) and cyclic
    d100, d010, d001 = (1, 0, 0), (0, 1, 0), (0, 0, 1)
    out = []
    for comp, (da, db, sa, sb, ra, rb) in enumerate(
        [
            (d001, d010, 1, 2, 1.0, -1.0),
            (d001, d100, 0, 2, -1.0, 1.0),
            (d010, d100, 0, 1, 1.0, -1.0),
        ]
    ):
        v1 = bas.values(comp, e, da)
        v2 = bas.values(comp, e, db)
        C = np.zeros((v1.shape[0], 3, v1.shape[1]))
        C[:, sa, :] = ra * v1
        C[:, sb, :] = rb * v2
        out.append(C)
    return out


def op_curlu_curlv(space: DiscreteSpace, nu=1.0, element_order=None) -> sp.csr_matrix:
    """Curl-curl matrix K_ij = int nu curl φ_i . curl φ_j dΩ (kind 1)."""
    if space.kind != 1:
        raise ValidationError("op_curlu_curlv needs a kind-1 space")
    rule = make_rule(space)
    geo = _GeometryTables(space, rule)
    bas = _BasisTables(space, rule, 1)
    acc = _TripletAccumulator(space.dof_count)
    d = space.ndim
    for e in _element_ids(rule, element_order):
        w = _element_weights(rule, e)
        det = geo.element(e, "det")
        nu_q = _coefficient_values(nu, geo.element(e, "F"))
        _check_positive("reluctivity", nu_q)
        scale = w * nu_q / det
        gis = [bas.global_indices(c_, e) for c_ in range(space.n_components)]
        if d == 2:
            curls = _curl_components_2d(bas, e)
            for a in range(2):
                for b in range(a, 2):
                    blk = np.einsum("iq,jq,q->ij", curls[a], curls[b], scale)
                    acc.add(gis[a], gis[b], blk)
                    if b > a:
                        acc.add(gis[b], gis[a], blk.T)
        else:
            G = geo.element(e, "G")
            curls = _curl_components_3d(bas, e)
            for a in range(3):
                for b in range(a, 3):
                    blk = np.einsum("ivq,jwq,qvw,q->ij", curls[a], curls[b], G, scale)
                    acc.add(gis[a], gis[b], blk)
                    if b > a:
                        acc.add(gis[b], gis[a], blk.T)
    return acc.tocsr()


def op_f_v(space: DiscreteSpace, source, element_order=None) -> np.ndarray:
    """Load vector b_i = int f φ_i dΩ for a kind-0 space."""
    if space.kind != 0:
        raise ValidationError("op_f_v needs a kind-0 space")
    rule = make_rule(space)
    geo = _GeometryTables(space, rule)
    bas = _BasisTables(space, rule, 0)
    b = np.zeros(space.dof_count)
    zero = (0,) * space.ndim
    for e in _element_ids(rule, element_order):
        w = _element_weights(rule, e)
        det = geo.element(e, "det")
        f = _coefficient_values(source, geo.element(e, "F"))
        V = bas.values(0, e, zero)
        gi = bas.global_indices(0, e)
        np.add.at(b, gi, np.einsum("iq,q->i", V, w * det * f))
    return b


# ---------------------------------------------------------------------------
# Essential boundary conditions by row/column elimination
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Recovery:
    """Reinserts eliminated boundary values into full-length vectors."""

    size: int
    free: np.ndarray
    constrained: np.ndarray
    values: np.ndarray

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        reduced = np.asarray(reduced, float)
        if reduced.ndim == 1:
            full = np.zeros(self.size)
            full[self.free] = reduced
            full[self.constrained] = self.values
            return full
        full = np.zeros((self.size, reduced.shape[1]))
        full[self.free] = reduced
        full[self.constrained] = self.values[:, None]
        return full


def apply_dirichlet(K: sp.spmatrix, second, dofs, values=0.0):
    """Eliminate constrained DOFs from K and from a companion matrix or
    right-hand side.

    Returns (K_reduced, second_reduced, Recovery). ``second`` may be a mass
    matrix (eigenproblems, homogeneous values only) or a load vector, in
    which case the boundary data is moved to the right-hand side.
    """
    K = sp.csr_matrix(K)
    n = K.shape[0]
    dofs = np.unique(np.asarray(dofs, dtype=int))
    if dofs.size and (dofs.min() < 0 or dofs.max() >= n):
        raise ValidationError("constrained DOF index out of range")
    vals = np.full(dofs.size, float(values)) if np.isscalar(values) else np.asarray(values, float)
    if vals.shape != (dofs.size,):
        raise ValidationError("one boundary value per constrained DOF required")
    is_vector = not sp.issparse(second) and np.asarray(second).ndim == 1
    if not is_vector and np.any(vals != 0.0):
        raise ValidationError("eigenproblems admit homogeneous boundary values only")
    free = np.setdiff1d(np.arange(n), dofs)
    K_red = K[free][:, free]
    if is_vector:
        b = np.asarray(second, float)
        b_red = b[free]
        if dofs.size and np.any(vals != 0.0):
            b_red = b_red - K[free][:, dofs] @ vals
        second_red = b_red
    else:
        M = sp.csr_matrix(second)
        second_red = M[free][:, free]
    return K_red, second_red, Recovery(size=n, free=free, constrained=dofs, values=vals)
