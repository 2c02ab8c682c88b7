"""NURBS patches: mappings, Jacobians, pushforwards, conic constructors,
multipatch topology, control-point displacement and geometry files.

A patch maps the unit cube [0,1]^d into R^m (m = 2 or 3) through a rational
tensor-product spline. Control points are stored flat in lexicographic order
with the first parametric index varying fastest; homogeneous (projective)
coordinates are used internally for refinement only.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import PointLocationError, SingularMappingError, ValidationError
from .splines import (
    KnotVector,
    TensorBasisSpec,
    collocation,
    eval_tensor,
    refine_knots,
    subdivision_knots,
)

_SIDE_RE = re.compile(r"^d([0-2])_(min|max)$")

INTERFACE_TOL = 1e-10


def side_axis(side: str, ndim: int) -> tuple[int, bool]:
    """Parse a side name 'd{k}_min'/'d{k}_max' into (axis, is_max)."""
    m = _SIDE_RE.match(side)
    if not m or int(m.group(1)) >= ndim:
        raise ValidationError(f"invalid side name {side!r} for a {ndim}d patch")
    return int(m.group(1)), m.group(2) == "max"


def all_sides(ndim: int) -> list[str]:
    return [f"d{k}_{end}" for k in range(ndim) for end in ("min", "max")]


@dataclass(eq=False)
class Patch:
    """Rational tensor-product spline patch.

    control_points has shape (prod n_d, m); weights aligns with it. Patches
    are treated as immutable after construction; all evaluation is pure.
    """

    basis: TensorBasisSpec
    control_points: np.ndarray
    weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.control_points = np.array(self.control_points, dtype=float)
        self.weights = np.array(self.weights, dtype=float)
        if self.control_points.ndim != 2 or self.control_points.shape[1] not in (2, 3):
            raise ValidationError("control points must be an (N, m) array with m = 2 or 3")
        if self.control_points.shape[0] != self.basis.dim:
            raise ValidationError(
                f"expected {self.basis.dim} control points, got {self.control_points.shape[0]}"
            )
        if self.weights.shape != (self.basis.dim,):
            raise ValidationError("weights must align with control points")
        if np.any(self.weights <= 0.0):
            raise ValidationError("weights must be positive")
        if self.basis.ndim > self.phys_dim:
            raise ValidationError("parametric dimension exceeds physical dimension")
        self.control_points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def ndim(self) -> int:
        return self.basis.ndim

    @property
    def phys_dim(self) -> int:
        return self.control_points.shape[1]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.basis.dims

    def control_grid(self) -> np.ndarray:
        """Control points shaped (n_1, ..., n_d, m)."""
        return self.control_points.reshape(self.shape + (self.phys_dim,), order="F")

    def weight_grid(self) -> np.ndarray:
        return self.weights.reshape(self.shape, order="F")

    def homogeneous_grid(self) -> np.ndarray:
        """(w*x, ..., w) grid used for projective-coordinate refinement."""
        w = self.weight_grid()[..., None]
        return np.concatenate([self.control_grid() * w, w], axis=-1)


@dataclass(eq=False)
class JacobianSample:
    """Jacobian DF (m x d) with its determinant, or the length/area element
    sqrt(det(DF^T DF)) when d < m."""

    DF: np.ndarray
    det: float


@dataclass(eq=False)
class Interface:
    """Full-side gluing between two patches; ``reverse`` holds one flag per
    tangential direction of the shared side (ascending axis order)."""

    patch_a: int
    side_a: str
    patch_b: int
    side_b: str
    reverse: tuple[bool, ...] = ()

    def __post_init__(self):
        self.reverse = tuple(bool(r) for r in self.reverse)


@dataclass(eq=False)
class MultiPatch:
    """Collection of conforming patches glued along full sides."""

    patches: list[Patch]
    interfaces: list[Interface] = field(default_factory=list)

    def __post_init__(self):
        if not self.patches:
            raise ValidationError("a multipatch needs at least one patch")
        d = self.patches[0].ndim
        if any(p.ndim != d or p.phys_dim != self.patches[0].phys_dim for p in self.patches):
            raise ValidationError("all patches must share parametric and physical dimensions")
        for itf in self.interfaces:
            _check_interface(self, itf)

    @property
    def ndim(self) -> int:
        return self.patches[0].ndim

    def outer_sides(self) -> list[tuple[int, str]]:
        """Patch sides not glued to any neighbour (the domain boundary)."""
        used = set()
        for itf in self.interfaces:
            used.add((itf.patch_a, itf.side_a))
            used.add((itf.patch_b, itf.side_b))
        return [
            (i, s)
            for i in range(len(self.patches))
            for s in all_sides(self.ndim)
            if (i, s) not in used
        ]


def _tangential_axes(axis: int, ndim: int) -> list[int]:
    return [a for a in range(ndim) if a != axis]


def _side_grid(grid: np.ndarray, axis: int, is_max: bool) -> np.ndarray:
    return np.take(grid, -1 if is_max else 0, axis=axis)


def _apply_reverse(arr: np.ndarray, reverse: tuple[bool, ...]) -> np.ndarray:
    for ax, rev in enumerate(reverse):
        if rev:
            arr = np.flip(arr, axis=ax)
    return arr


def _check_interface(mp: MultiPatch, itf: Interface) -> None:
    d = mp.ndim
    if not (0 <= itf.patch_a < len(mp.patches) and 0 <= itf.patch_b < len(mp.patches)):
        raise ValidationError("interface refers to a missing patch")
    pa, pb = mp.patches[itf.patch_a], mp.patches[itf.patch_b]
    ax_a, max_a = side_axis(itf.side_a, d)
    ax_b, max_b = side_axis(itf.side_b, d)
    tang_a = _tangential_axes(ax_a, d)
    tang_b = _tangential_axes(ax_b, d)
    if len(itf.reverse) != d - 1:
        raise ValidationError("interface needs one reverse flag per tangential direction")
    if d == 3 and any(itf.reverse):
        raise ValidationError("3d interfaces must match with identity orientation")
    for ta, tb, rev in zip(tang_a, tang_b, itf.reverse):
        kva, kvb = pa.basis.kvs[ta], pb.basis.kvs[tb]
        if kva.degree != kvb.degree:
            raise ValidationError(
                f"interface {itf.patch_a}/{itf.patch_b}: degrees differ along the shared side"
            )
        kb = 1.0 - kvb.knots[::-1] if rev else kvb.knots
        if kva.n != kvb.n or not np.allclose(kva.knots, kb, atol=1e-12, rtol=0.0):
            raise ValidationError(
                f"interface {itf.patch_a}/{itf.patch_b}: knot vectors differ along the shared side"
            )
    cpa = _side_grid(pa.control_grid(), ax_a, max_a)
    cpb = _side_grid(pb.control_grid(), ax_b, max_b)
    wa = _side_grid(pa.weight_grid(), ax_a, max_a)
    wb = _side_grid(pb.weight_grid(), ax_b, max_b)
    cpb = _apply_reverse(cpb, itf.reverse)
    wb = _apply_reverse(wb, itf.reverse)
    if np.max(np.abs(cpa - cpb)) > INTERFACE_TOL or np.max(np.abs(wa - wb)) > INTERFACE_TOL:
        raise ValidationError(
            f"interface {itf.patch_a}/{itf.patch_b}: control nets do not coincide"
        )


# ---------------------------------------------------------------------------
# Mapping evaluation
# ---------------------------------------------------------------------------

def map_values(patch: Patch, axes_points, max_deriv: int = 0) -> dict:
    """Evaluate the mapping on a tensor grid of parameters.

    axes_points is one 1d array per parametric direction. Returns a dict with
    'F' (grid + (m,)), 'W' (grid) and, for max_deriv >= 1, 'DF' (grid + (m, d))
    and 'det' (grid; length/area element when d < m).
    """
    d, m = patch.ndim, patch.phys_dim
    axes_points = [np.atleast_1d(np.asarray(p, float)) for p in axes_points]
    if len(axes_points) != d:
        raise ValidationError("one coordinate array per parametric direction required")
    colls = [collocation(kv, pts, max_deriv) for kv, pts in zip(patch.basis.kvs, axes_points)]
    H = patch.homogeneous_grid()

    def contract(alpha):
        if d == 1:
            return np.einsum("qi,ic->qc", colls[0][alpha[0]], H)
        if d == 2:
            return np.einsum("qi,rj,ijc->qrc", colls[0][alpha[0]], colls[1][alpha[1]], H)
        return np.einsum(
            "qi,rj,sk,ijkc->qrsc",
            colls[0][alpha[0]], colls[1][alpha[1]], colls[2][alpha[2]], H,
        )

    zero = (0,) * d
    H0 = contract(zero)
    W = H0[..., m]
    F = H0[..., :m] / W[..., None]
    out = {"F": F, "W": W}
    if max_deriv >= 1:
        cols = []
        for ax in range(d):
            alpha = tuple(1 if a == ax else 0 for a in range(d))
            Hd = contract(alpha)
            cols.append((Hd[..., :m] - F * Hd[..., m:]) / W[..., None])
        DF = np.stack(cols, axis=-1)
        out["DF"] = DF
        if d == m:
            out["det"] = np.linalg.det(DF)
        else:
            gram = np.einsum("...ca,...cb->...ab", DF, DF)
            out["det"] = np.sqrt(np.linalg.det(gram)) if d > 1 else np.sqrt(gram[..., 0, 0])
    return out


def eval_map(patch: Patch, xi) -> np.ndarray:
    """Physical point F(xi)."""
    xi = np.atleast_1d(np.asarray(xi, float))
    vals = map_values(patch, [np.array([x]) for x in xi], 0)
    return vals["F"].reshape(patch.phys_dim)


def eval_jacobian(patch: Patch, xi) -> JacobianSample:
    """Jacobian of F at xi; raises SingularMappingError for det <= 1e-14 on
    square mappings."""
    xi = np.atleast_1d(np.asarray(xi, float))
    vals = map_values(patch, [np.array([x]) for x in xi], 1)
    DF = vals["DF"].reshape(patch.phys_dim, patch.ndim)
    det = float(vals["det"].reshape(()))
    if patch.ndim == patch.phys_dim and det <= 1e-14:
        name = f" {patch.label!r}" if patch.label else ""
        raise SingularMappingError(
            f"singular mapping on patch{name} at xi={tuple(np.round(xi, 12))}: det={det:.3e}"
        )
    return JacobianSample(DF=DF, det=det)


def pushforward(kind: int, patch: Patch, values, jac: JacobianSample) -> np.ndarray:
    """Map reference values to physical ones for a differential-form kind.

    kind 0: identity; kind 1: DF^{-T} v (tangential/curl-conforming);
    kind 2: DF v / det (flux/div-conforming); kind 3: v / det (densities).
    """
    v = np.asarray(values, float)
    if kind == 0:
        return v
    if kind == 3:
        return v / jac.det
    if kind in (1, 2):
        d = patch.ndim
        if v.shape != (d,):
            raise ValidationError(f"kind {kind} expects a {d}-vector, got shape {v.shape}")
        if jac.DF.shape[0] != jac.DF.shape[1]:
            raise ValidationError("vector pushforwards need a square Jacobian")
        if kind == 1:
            return np.linalg.solve(jac.DF.T, v)
        return jac.DF @ v / jac.det
    raise ValidationError("kind must be 0, 1, 2 or 3")


def displace_controls(patch: Patch, delta) -> Patch:
    """New patch with control points moved by delta; weights and basis unchanged."""
    delta = np.asarray(delta, float)
    if delta.shape != patch.control_points.shape:
        raise ValidationError("displacement shape must match the control net")
    return Patch(patch.basis, patch.control_points + delta, patch.weights, patch.label)


def _apply_axis(arr: np.ndarray, M: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(arr, axis, 0)
    res = np.tensordot(M, moved, axes=(1, 0))
    return np.moveaxis(res, 0, axis)


def refine_patch(patch: Patch, counts) -> Patch:
    """Geometry-preserving h-refinement: split every span into counts[d] parts.

    Transfer happens in homogeneous coordinates, so rational geometry is
    reproduced exactly up to round-off.
    """
    if np.isscalar(counts):
        counts = (int(counts),) * patch.ndim
    counts = tuple(int(c) for c in counts)
    if len(counts) != patch.ndim or any(c < 1 for c in counts):
        raise ValidationError("one subdivision count >= 1 per direction required")
    H = patch.homogeneous_grid()
    new_kvs = []
    for ax, (kv, c) in enumerate(zip(patch.basis.kvs, counts)):
        kv_new, T = refine_knots(kv, subdivision_knots(kv, c))
        new_kvs.append(kv_new)
        H = _apply_axis(H, T, ax)
    basis = TensorBasisSpec(tuple(new_kvs))
    m = patch.phys_dim
    w = H[..., m]
    cp = H[..., :m] / w[..., None]
    return Patch(
        basis,
        cp.reshape(-1, m, order="F"),
        w.reshape(-1, order="F"),
        patch.label,
    )


# ---------------------------------------------------------------------------
# Conic constructors
# ---------------------------------------------------------------------------

_KV_P1 = KnotVector([0.0, 0.0, 1.0, 1.0], 1)
_KV_P2 = KnotVector([0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2)


def _arc_controls(radius: float, start_deg: float, angle_deg: float, center) -> tuple[np.ndarray, np.ndarray]:
    """Exact rational quadratic for a circle arc spanning at most 90 degrees."""
    if radius <= 0.0:
        raise ValidationError("radius must be positive")
    if not 0.0 < angle_deg <= 90.0:
        raise ValidationError("arc angle must lie in (0, 90] degrees")
    c = np.asarray(center, float)
    t0 = np.radians(start_deg)
    t1 = np.radians(start_deg + angle_deg)
    tm = 0.5 * (t0 + t1)
    w1 = np.cos(0.5 * (t1 - t0))
    pts = np.array(
        [
            c + radius * np.array([np.cos(t0), np.sin(t0)]),
            c + (radius / w1) * np.array([np.cos(tm), np.sin(tm)]),
            c + radius * np.array([np.cos(t1), np.sin(t1)]),
        ]
    )
    return pts, np.array([1.0, w1, 1.0])


def _line(start, end) -> Patch:
    pts = np.array([np.asarray(start, float), np.asarray(end, float)])
    return Patch(TensorBasisSpec((_KV_P1,)), pts, np.ones(2), "line")


def _arc(radius: float, angle_deg: float, start_deg: float, center) -> Patch:
    pts, w = _arc_controls(radius, start_deg, angle_deg, center)
    return Patch(TensorBasisSpec((_KV_P2,)), pts, w, "arc")


def _ring_sector(r_inner: float, r_outer: float, angle_deg: float, start_deg: float, center, label="ring_sector") -> Patch:
    if not 0.0 < r_inner < r_outer:
        raise ValidationError("require 0 < r_inner < r_outer")
    inner, w = _arc_controls(r_inner, start_deg, angle_deg, center)
    outer, _ = _arc_controls(r_outer, start_deg, angle_deg, center)
    # direction 1 radial (linear), direction 2 tangential (quadratic)
    basis = TensorBasisSpec((_KV_P1, _KV_P2))
    cp = np.empty((6, 2))
    wts = np.empty(6)
    for i2 in range(3):
        cp[0 + 2 * i2] = inner[i2]
        cp[1 + 2 * i2] = outer[i2]
        wts[0 + 2 * i2] = w[i2]
        wts[1 + 2 * i2] = w[i2]
    return Patch(basis, cp, wts, label)


def _disc(radius: float, center) -> MultiPatch:
    """Five-patch disc: a central square surrounded by four blended patches.

    Avoids the polar singularity of a single-patch parameterization; every
    interface is fully conforming.
    """
    if radius <= 0.0:
        raise ValidationError("radius must be positive")
    c = np.asarray(center, float)
    a = 0.5 * radius
    u = np.array([1.0, np.sqrt(0.5), 1.0])
    # central square: tensor-product rational biquadratic over {-a, 0, a}^2
    xs = np.array([-a, 0.0, a])
    cp0 = np.empty((9, 2))
    w0 = np.empty(9)
    for j in range(3):
        for i in range(3):
            cp0[i + 3 * j] = c + np.array([xs[i], xs[j]])
            w0[i + 3 * j] = u[i] * u[j]
    central = Patch(TensorBasisSpec((_KV_P2, _KV_P2)), cp0, w0, "disc_center")

    corners = {
        "east": (np.array([a, -a]), np.array([a, 0.0]), np.array([a, a]), -45.0),
        "north": (np.array([a, a]), np.array([0.0, a]), np.array([-a, a]), 45.0),
        "west": (np.array([-a, a]), np.array([-a, 0.0]), np.array([-a, -a]), 135.0),
        "south": (np.array([-a, -a]), np.array([0.0, -a]), np.array([a, -a]), 225.0),
    }
    outer_patches = []
    for name, (q0, q1, q2, start) in corners.items():
        arc_pts, w_arc = _arc_controls(radius, start, 90.0, c)
        inner = np.array([c + q0, c + q1, c + q2])
        basis = TensorBasisSpec((_KV_P1, _KV_P2))
        cp = np.empty((6, 2))
        wts = np.empty(6)
        for i2 in range(3):
            cp[0 + 2 * i2] = inner[i2]
            cp[1 + 2 * i2] = arc_pts[i2]
            wts[0 + 2 * i2] = w_arc[i2]
            wts[1 + 2 * i2] = w_arc[i2]
        outer_patches.append(Patch(basis, cp, wts, f"disc_{name}"))

    patches = [central] + outer_patches  # 1=east, 2=north, 3=west, 4=south
    interfaces = [
        Interface(0, "d0_max", 1, "d0_min", (False,)),
        Interface(0, "d1_max", 2, "d0_min", (True,)),
        Interface(0, "d0_min", 3, "d0_min", (True,)),
        Interface(0, "d1_min", 4, "d0_min", (False,)),
        Interface(1, "d1_max", 2, "d1_min", (False,)),
        Interface(2, "d1_max", 3, "d1_min", (False,)),
        Interface(3, "d1_max", 4, "d1_min", (False,)),
        Interface(1, "d1_min", 4, "d1_max", (False,)),
    ]
    return MultiPatch(patches, interfaces)


def _annulus(r_inner: float, r_outer: float, n_rings: int, center) -> MultiPatch:
    """Closed annulus from four 90-degree ring sectors per radial ring."""
    if n_rings < 1:
        raise ValidationError("n_rings must be >= 1")
    radii = np.linspace(r_inner, r_outer, n_rings + 1)
    patches = []
    for ring in range(n_rings):
        for q in range(4):
            patches.append(
                _ring_sector(
                    radii[ring], radii[ring + 1], 90.0, 90.0 * q, center,
                    label=f"annulus_r{ring}_q{q}",
                )
            )
    interfaces = []
    for ring in range(n_rings):
        base = 4 * ring
        for q in range(3):
            interfaces.append(Interface(base + q, "d1_max", base + q + 1, "d1_min", (False,)))
        interfaces.append(Interface(base + 0, "d1_min", base + 3, "d1_max", (False,)))
        if ring + 1 < n_rings:
            for q in range(4):
                interfaces.append(Interface(base + q, "d0_max", base + 4 + q, "d0_min", (False,)))
    return MultiPatch(patches, interfaces)


def make_conic(kind: str, **params):
    """Exact conic builders.

    kind 'line': start, end. 'arc': radius, angle_deg (<= 90), start_deg=0,
    center=(0,0). 'disc': radius, center. 'annulus': r_inner, r_outer,
    n_rings=1, center. 'ring-sector': r_inner, r_outer, angle_deg,
    start_deg=0, center. 'disc' and 'annulus' return a MultiPatch.
    """
    if kind == "line":
        return _line(params.pop("start"), params.pop("end"))
    if kind == "arc":
        return _arc(
            params.pop("radius"),
            params.pop("angle_deg", 90.0),
            params.pop("start_deg", 0.0),
            params.pop("center", (0.0, 0.0)),
        )
    if kind == "disc":
        return _disc(params.pop("radius", 1.0), params.pop("center", (0.0, 0.0)))
    if kind == "annulus":
        return _annulus(
            params.pop("r_inner"),
            params.pop("r_outer"),
            params.pop("n_rings", 1),
            params.pop("center", (0.0, 0.0)),
        )
    if kind == "ring-sector":
        return _ring_sector(
            params.pop("r_inner"),
            params.pop("r_outer"),
            params.pop("angle_deg", 90.0),
            params.pop("start_deg", 0.0),
            params.pop("center", (0.0, 0.0)),
        )
    raise ValidationError(f"unknown conic kind {kind!r}")


def unit_square() -> Patch:
    """Bilinear unit square [0,1]^2."""
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    return Patch(TensorBasisSpec((_KV_P1, _KV_P1)), pts, np.ones(4), "square")


def unit_cube() -> Patch:
    """Trilinear unit cube [0,1]^3."""
    pts = np.array(
        [[float(i), float(j), float(k)] for k in range(2) for j in range(2) for i in range(2)]
    )
    return Patch(TensorBasisSpec((_KV_P1, _KV_P1, _KV_P1)), pts, np.ones(8), "cube")


def two_squares() -> MultiPatch:
    """Two unit squares sharing a vertical edge: [0,1]^2 and [1,2]x[0,1]."""
    left = unit_square()
    pts = np.array([[1.0, 0.0], [2.0, 0.0], [1.0, 1.0], [2.0, 1.0]])
    right = Patch(TensorBasisSpec((_KV_P1, _KV_P1)), pts, np.ones(4), "square_right")
    return MultiPatch([left, right], [Interface(0, "d0_max", 1, "d0_min", (False,))])


# ---------------------------------------------------------------------------
# Point location
# ---------------------------------------------------------------------------

def invert_map(patch: Patch, x, tol: float = 1e-12, max_iter: int = 20) -> np.ndarray:
    """Reference coordinates with F(xi) = x by Newton iteration.

    Multi-start from a 4^d seed grid (best residual first); raises
    PointLocationError when no start converges inside the unit cube.
    """
    x = np.asarray(x, float)
    d = patch.ndim
    if x.shape != (patch.phys_dim,):
        raise ValidationError("point dimension mismatch")
    if d != patch.phys_dim:
        raise ValidationError("point location requires a square mapping")
    scale = 1.0 + float(np.linalg.norm(x))
    axes = [np.linspace(0.125, 0.875, 4)] * d
    seeds = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    res = np.array([np.linalg.norm(eval_map(patch, s) - x) for s in seeds])
    for idx in np.argsort(res):
        xi = seeds[idx].copy()
        for _ in range(max_iter):
            vals = map_values(patch, [np.array([v]) for v in xi], 1)
            r = vals["F"].reshape(patch.phys_dim) - x
            if np.linalg.norm(r) <= tol * scale:
                break
            DF = vals["DF"].reshape(patch.phys_dim, d)
            try:
                step = np.linalg.solve(DF, -r)
            except np.linalg.LinAlgError:
                break
            xi = np.clip(xi + step, -0.25, 1.25)
        else:
            continue
        if np.linalg.norm(r) <= tol * scale and np.all(xi > -1e-8) and np.all(xi < 1 + 1e-8):
            return np.clip(xi, 0.0, 1.0)
    raise PointLocationError(f"point {tuple(x)} not found inside patch {patch.label!r}")


def locate(geometry, x) -> tuple[int, np.ndarray]:
    """(patch index, reference coords) of a physical point in a MultiPatch or Patch."""
    patches = geometry.patches if isinstance(geometry, MultiPatch) else [geometry]
    for i, p in enumerate(patches):
        try:
            return i, invert_map(p, x)
        except PointLocationError:
            continue
    raise PointLocationError(f"point {tuple(np.asarray(x, float))} outside all patches")


# ---------------------------------------------------------------------------
# Geometry files
# ---------------------------------------------------------------------------

def geometry_to_dict(mp: MultiPatch) -> dict:
    patches = []
    for p in mp.patches:
        rows = np.column_stack([p.control_points, p.weights])
        patches.append(
            {
                "degrees": [kv.degree for kv in p.basis.kvs],
                "knots": [kv.knots.tolist() for kv in p.basis.kvs],
                "points": rows.tolist(),
                "label": p.label,
            }
        )
    interfaces = [
        {
            "patch_a": i.patch_a,
            "side_a": i.side_a,
            "patch_b": i.patch_b,
            "side_b": i.side_b,
            "reverse": list(i.reverse),
        }
        for i in mp.interfaces
    ]
    return {"patches": patches, "interfaces": interfaces}


_PATCH_KEYS = {"degrees", "knots", "points", "label"}
_ITF_KEYS = {"patch_a", "side_a", "patch_b", "side_b", "reverse"}


def geometry_from_dict(data: dict) -> MultiPatch:
    unknown = set(data) - {"patches", "interfaces"}
    if unknown:
        raise ValidationError(f"unknown geometry keys: {sorted(unknown)}")
    patches = []
    for entry in data.get("patches", []):
        bad = set(entry) - _PATCH_KEYS
        if bad:
            raise ValidationError(f"unknown patch keys: {sorted(bad)}")
        degrees = entry["degrees"]
        kvs = tuple(KnotVector(k, int(p)) for k, p in zip(entry["knots"], degrees))
        if len(kvs) != len(degrees):
            raise ValidationError("one knot vector per degree required")
        rows = np.asarray(entry["points"], float)
        patches.append(
            Patch(TensorBasisSpec(kvs), rows[:, :-1], rows[:, -1], entry.get("label", ""))
        )
    interfaces = []
    for entry in data.get("interfaces", []):
        bad = set(entry) - _ITF_KEYS
        if bad:
            raise ValidationError(f"unknown interface keys: {sorted(bad)}")
        interfaces.append(
            Interface(
                int(entry["patch_a"]), entry["side_a"],
                int(entry["patch_b"]), entry["side_b"],
                tuple(entry.get("reverse", [])),
            )
        )
    return MultiPatch(patches, interfaces)


def save_geometry(mp: MultiPatch, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(geometry_to_dict(mp), fh, indent=1)
        fh.write("\n")


def load_geometry(path) -> MultiPatch:
    with open(path, "r", encoding="utf-8") as fh:
        return geometry_from_dict(json.load(fh))


def as_multipatch(geometry) -> MultiPatch:
    """Wrap a bare Patch into a single-patch MultiPatch."""
    if isinstance(geometry, MultiPatch):
        return geometry
    return MultiPatch([geometry], [])
