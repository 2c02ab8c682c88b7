"""Discrete spline de Rham complex, DOF maps, boundary sets, and scalar
multipatch coupling.

Spaces are plain B-splines on the reference cube even when the geometry is
rational; physical fields arise through the pushforward matching the space
kind. Degree-reduced directions use the derivative knot vector (the open
vector with its first and last knot dropped), which makes the discrete
gradient/curl/divergence exact two-term difference operators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .geometry import MultiPatch, Patch, all_sides, eval_map, side_axis
from .splines import KnotVector, TensorBasisSpec, make_open_knots, subdivision_knots

KIND_NAMES = {0: "H1", 1: "Hcurl", 2: "Hdiv", 3: "L2"}


@dataclass(eq=False)
class DiscreteSpace:
    """One member of the spline complex on a single patch.

    component_specs holds one tensor basis per vector component (a single
    entry for the scalar kinds 0 and 3). DOFs are numbered lexicographically
    within each component, components concatenated in order.
    """

    kind: int
    patch: Patch
    degrees: tuple[int, ...]
    component_specs: tuple[TensorBasisSpec, ...]

    @property
    def ndim(self) -> int:
        return len(self.degrees)

    @property
    def n_components(self) -> int:
        return len(self.component_specs)

    @property
    def component_sizes(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.component_specs)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(np.concatenate([[0], np.cumsum(self.component_sizes)]).astype(int))

    @property
    def dof_count(self) -> int:
        return int(sum(self.component_sizes))


def _reduced(kv: KnotVector) -> KnotVector:
    """Derivative space knot vector: drop the first and last knot."""
    if kv.degree < 1:
        raise ValidationError("cannot reduce the degree of piecewise constants")
    return KnotVector(kv.knots[1:-1], kv.degree - 1)


def _component_degree_patterns(kind: int, ndim: int) -> list[tuple[int, ...]]:
    """Per-component reduction masks: 1 marks a degree-reduced direction."""
    if kind == 0:
        return [(0,) * ndim]
    if kind == 3:
        return [(1,) * ndim]
    if kind == 1:
        return [tuple(1 if d == c else 0 for d in range(ndim)) for c in range(ndim)]
    if kind == 2 and ndim == 3:
        return [tuple(0 if d == c else 1 for d in range(3)) for c in range(3)]
    raise ValidationError(f"kind {kind} is not available in {ndim}d")


def make_space(patch: Patch, kind: int, degrees=None, refine=None) -> DiscreteSpace:
    """Build a member of the discrete complex on a patch.

    Parameters
    ----------
    patch : geometry carrier; its breakpoints define the mesh.
    kind : 0 (scalar/H1), 1 (curl-conforming), 2 (div-conforming, 3d only),
        3 (densities/L2).
    degrees : per-direction space degrees; defaults to the patch degrees.
        The space is independent of the geometry degree.
    refine : per-direction span subdivision counts (int broadcasts).
    """
    d = patch.ndim
    if kind not in (0, 1, 2, 3):
        raise ValidationError("kind must be 0, 1, 2 or 3")
    if degrees is None:
        degrees = patch.basis.degrees
    if np.isscalar(degrees):
        degrees = (int(degrees),) * d
    degrees = tuple(int(p) for p in degrees)
    if len(degrees) != d:
        raise ValidationError("one degree per parametric direction required")
    if refine is None:
        refine = 1
    if np.isscalar(refine):
        refine = (int(refine),) * d
    refine = tuple(int(r) for r in refine)
    if len(refine) != d or any(r < 1 for r in refine):
        raise ValidationError("refinement counts must be >= 1 per direction")
    min_degree = 1 if kind == 0 else 1
    if any(p < min_degree for p in degrees):
        raise ValidationError(f"degree too low for kind {kind} ({KIND_NAMES[kind]})")

    base_kvs = []
    for ax in range(d):
        geo_kv = patch.basis.kvs[ax]
        breaks = np.unique(
            np.concatenate([geo_kv.breakpoints(), subdivision_knots(geo_kv, refine[ax])])
        )
        base_kvs.append(make_open_knots(degrees[ax], breaks))

    comps = []
    for mask in _component_degree_patterns(kind, d):
        kvs = tuple(_reduced(kv) if m else kv for kv, m in zip(base_kvs, mask))
        comps.append(TensorBasisSpec(kvs))
    return DiscreteSpace(kind=kind, patch=patch, degrees=degrees, component_specs=tuple(comps))


# ---------------------------------------------------------------------------
# Discrete differential operators
# ---------------------------------------------------------------------------

def _univariate_diff(kv: KnotVector) -> sp.csr_matrix:
    """Two-term spline differentiation matrix, (n-1) x n."""
    p, knots, n = kv.degree, kv.knots, kv.n
    rows, cols, vals = [], [], []
    for i in range(n - 1):
        denom = knots[i + p + 1] - knots[i + 1]
        rows += [i, i]
        cols += [i, i + 1]
        vals += [-p / denom, p / denom]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n - 1, n))


def _axis_operator(dims: tuple[int, ...], axis: int, M: sp.spmatrix) -> sp.csr_matrix:
    """Apply M along one axis of a lexicographically flattened tensor
    (first index fastest)."""
    op = sp.identity(1, format="csr")
    for ax, n in enumerate(dims):
        fac = M if ax == axis else sp.identity(n, format="csr")
        op = sp.kron(fac, op, format="csr")
    return op


def discrete_diff(space: DiscreteSpace) -> tuple[DiscreteSpace, sp.csr_matrix]:
    """Next space in the complex and the coefficient operator D.

    kind 0 -> gradient, kind 1 -> curl (scalar curl in 2d, mapping to kind 3),
    kind 2 -> divergence (3d). Evaluating the differentiated field equals
    evaluating the output space with coefficients D @ c.
    """
    d = space.ndim
    patch, degrees = space.patch, space.degrees
    full_kvs = space.component_specs[0].kvs if space.kind == 0 else None

    def rebuild(kind_out):
        # reuse the scalar base knot vectors implied by this space
        if space.kind == 0:
            base = space.component_specs[0].kvs
        else:
            # recover the unreduced vector per direction from any component
            # that keeps full degree there
            base = []
            for ax in range(d):
                for comp, mask in zip(
                    space.component_specs, _component_degree_patterns(space.kind, d)
                ):
                    if mask[ax] == 0:
                        base.append(comp.kvs[ax])
                        break
            base = tuple(base)
        comps = []
        for mask in _component_degree_patterns(kind_out, d):
            kvs = tuple(_reduced(kv) if m else kv for kv, m in zip(base, mask))
            comps.append(TensorBasisSpec(kvs))
        return DiscreteSpace(kind_out, patch, degrees, tuple(comps))

    if space.kind == 0:
        out = rebuild(1)
        dims0 = space.component_specs[0].dims
        blocks = [
            _axis_operator(dims0, ax, _univariate_diff(full_kvs[ax])) for ax in range(d)
        ]
        return out, sp.vstack(blocks, format="csr")

    if space.kind == 1 and d == 2:
        out = rebuild(3)
        c1, c2 = space.component_specs
        D1 = _axis_operator(c2.dims, 0, _univariate_diff(c2.kvs[0]))
        D2 = _axis_operator(c1.dims, 1, _univariate_diff(c1.kvs[1]))
        return out, sp.hstack([-D2, D1], format="csr")

    if space.kind == 1 and d == 3:
        out = rebuild(2)
        c = space.component_specs
        Z = lambda r, q: sp.csr_matrix((r, q))

        def dax(comp, ax):
            return _axis_operator(comp.dims, ax, _univariate_diff(comp.kvs[ax]))

        row1 = [Z(out.component_specs[0].dim, c[0].dim), -dax(c[1], 2), dax(c[2], 1)]
        row2 = [dax(c[0], 2), Z(out.component_specs[1].dim, c[1].dim), -dax(c[2], 0)]
        row3 = [-dax(c[0], 1), dax(c[1], 0), Z(out.component_specs[2].dim, c[2].dim)]
        return out, sp.bmat([row1, row2, row3], format="csr")

    if space.kind == 2 and d == 3:
        out = rebuild(3)
        blocks = [
            _axis_operator(comp.dims, ax, _univariate_diff(comp.kvs[ax]))
            for ax, comp in enumerate(space.component_specs)
        ]
        return out, sp.hstack(blocks, format="csr")

    raise ValidationError(f"no differential operator for kind {space.kind} in {d}d")


# ---------------------------------------------------------------------------
# Boundary DOFs
# ---------------------------------------------------------------------------

def _component_index_grid(space: DiscreteSpace, comp: int) -> np.ndarray:
    dims = space.component_specs[comp].dims
    return space.offsets[comp] + np.arange(int(np.prod(dims))).reshape(dims, order="F")


def boundary_dofs(space: DiscreteSpace, sides="all") -> np.ndarray:
    """DOF indices whose trace is nonzero on the given sides.

    For kind 0 these are all functions touching the side; for kind 1 only the
    tangential components (the first/last layer of every component except the
    one normal to the side). Suitable for essential (Dirichlet/PEC) data.
    """
    if space.kind not in (0, 1):
        raise ValidationError("boundary DOFs are defined for kinds 0 and 1 only")
    if sides == "all":
        sides = all_sides(space.ndim)
    if isinstance(sides, str):
        sides = [sides]
    out = []
    for side in sides:
        axis, is_max = side_axis(side, space.ndim)
        for comp in range(space.n_components):
            if space.kind == 1 and comp == axis:
                continue  # normal component: no tangential trace
            grid = _component_index_grid(space, comp)
            out.append(np.take(grid, -1 if is_max else 0, axis=axis).ravel())
    if not out:
        return np.array([], dtype=int)
    return np.unique(np.concatenate(out))


# ---------------------------------------------------------------------------
# Scalar multipatch coupling
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class MultiPatchSpace:
    """Global C0 scalar space: per-patch kind-0 spaces with interface DOFs
    identified one-to-one."""

    multipatch: MultiPatch
    spaces: list[DiscreteSpace]
    local_to_global: list[np.ndarray]
    dof_count: int

    def global_indices(self, ipatch: int, local_idx) -> np.ndarray:
        return self.local_to_global[ipatch][np.asarray(local_idx, int)]


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # keep the smaller root so the lower patch keeps its numbering
            lo, hi = (ri, rj) if ri < rj else (rj, ri)
            self.parent[hi] = lo


def _side_dof_grid(space: DiscreteSpace, side: str) -> np.ndarray:
    axis, is_max = side_axis(side, space.ndim)
    grid = _component_index_grid(space, 0)
    return np.take(grid, -1 if is_max else 0, axis=axis)


def _side_anchor_grid(space: DiscreteSpace, side: str) -> np.ndarray:
    """Physical positions of the Greville anchors of a side's DOFs."""
    axis, is_max = side_axis(side, space.ndim)
    grevs = [kv.greville() for kv in space.component_specs[0].kvs]
    coords = []
    for ax, g in enumerate(grevs):
        coords.append(np.array([1.0 if is_max else 0.0]) if ax == axis else g)
    mesh = np.meshgrid(*coords, indexing="ij")
    pts = np.stack([m.ravel(order="F") for m in mesh], axis=-1)
    phys = np.array([eval_map(space.patch, xi) for xi in pts])
    shape = tuple(len(c) for ax, c in enumerate(coords) if ax != axis)
    return phys.reshape(shape + (space.patch.phys_dim,), order="F")


def couple_scalar_multipatch(mp: MultiPatch, degrees=None, refine=None) -> MultiPatchSpace:
    """Global C0 space over a conforming multipatch.

    Interface DOFs are identified through their Greville anchor points, which
    must coincide within 1e-10 after applying the interface reversal flags.
    """
    spaces = [make_space(p, 0, degrees, refine) for p in mp.patches]
    sizes = [s.dof_count for s in spaces]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    uf = _UnionFind(int(offsets[-1]))

    for itf in mp.interfaces:
        sa, sb = spaces[itf.patch_a], spaces[itf.patch_b]
        ax_a, _ = side_axis(itf.side_a, sa.ndim)
        ax_b, _ = side_axis(itf.side_b, sb.ndim)
        for ta, tb in zip(
            [a for a in range(sa.ndim) if a != ax_a],
            [b for b in range(sb.ndim) if b != ax_b],
        ):
            kva, kvb = sa.component_specs[0].kvs[ta], sb.component_specs[0].kvs[tb]
            if kva.degree != kvb.degree or kva.n != kvb.n:
                raise ValidationError(
                    f"interface {itf.patch_a}/{itf.patch_b}: non-matching spaces on the shared side"
                )
        grid_a = _side_dof_grid(sa, itf.side_a)
        grid_b = np.flip(
            _side_dof_grid(sb, itf.side_b),
            axis=[ax for ax, r in enumerate(itf.reverse) if r],
        ) if any(itf.reverse) else _side_dof_grid(sb, itf.side_b)
        if grid_a.shape != grid_b.shape:
            raise ValidationError(
                f"interface {itf.patch_a}/{itf.patch_b}: side DOF counts differ"
            )
        anch_a = _side_anchor_grid(sa, itf.side_a)
        anch_b = _side_anchor_grid(sb, itf.side_b)
        if any(itf.reverse):
            anch_b = np.flip(
                anch_b, axis=[ax for ax, r in enumerate(itf.reverse) if r]
            )
        gap = np.max(np.linalg.norm(anch_a - anch_b, axis=-1))
        if gap > 1e-10:
            raise ValidationError(
                f"interface {itf.patch_a}/{itf.patch_b}: anchor mismatch {gap:.2e} exceeds 1e-10"
            )
        for la, lb in zip(grid_a.ravel(), grid_b.ravel()):
            uf.union(int(offsets[itf.patch_a] + la), int(offsets[itf.patch_b] + lb))

    # global numbering in (patch, local lexicographic) order of the roots
    root_to_global: dict[int, int] = {}
    total = int(offsets[-1])
    flat = np.empty(total, dtype=int)
    next_id = 0
    for i in range(total):
        r = uf.find(i)
        if r not in root_to_global:
            root_to_global[r] = next_id
            next_id += 1
        flat[i] = root_to_global[r]
    local_to_global = [
        flat[offsets[i] : offsets[i + 1]].copy() for i in range(len(spaces))
    ]
    return MultiPatchSpace(mp, spaces, local_to_global, next_id)


def multipatch_boundary_dofs(mp_space: MultiPatchSpace, sides="outer") -> np.ndarray:
    """Global DOFs on the listed (patch, side) pairs; 'outer' means the whole
    domain boundary."""
    if sides == "outer" or sides == "all":
        sides = mp_space.multipatch.outer_sides()
    out = []
    for ipatch, side in sides:
        local = boundary_dofs(mp_space.spaces[ipatch], side)
        out.append(mp_space.global_indices(ipatch, local))
    if not out:
        return np.array([], dtype=int)
    return np.unique(np.concatenate(out))
