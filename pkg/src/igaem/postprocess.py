"""Field sampling, derived magnetic quantities, and file export.

2d magnetostatic solutions store the longitudinal vector potential, so the
flux density is its rotated gradient B = (du/dy, -du/dx). Multipole
coefficients follow the convention that a field with radial component
B_r(r0, phi) = C sin(n phi) has n-th coefficient exactly C.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PointLocationError, ValidationError
from .geometry import MultiPatch, map_values
from .solve import Solution
from .spaces import DiscreteSpace, MultiPatchSpace
from .splines import eval_tensor


# ---------------------------------------------------------------------------
# Point evaluation of solutions
# ---------------------------------------------------------------------------

def _local_coeff_grid(space: DiscreteSpace, coeffs: np.ndarray, comp: int) -> np.ndarray:
    lo, hi = space.offsets[comp], space.offsets[comp + 1]
    return coeffs[lo:hi].reshape(space.component_specs[comp].dims, order="F")


def _eval_scalar(space: DiscreteSpace, coeffs: np.ndarray, xi, max_deriv=0):
    """Reference value and partials of a kind-0/3 field at one point."""
    spec = space.component_specs[0]
    tb = eval_tensor(spec, xi, max_deriv)
    grid = _local_coeff_grid(space, coeffs, 0)
    sl = tuple(
        slice(f, f + kv.degree + 1) for f, kv in zip(tb.first_active, spec.kvs)
    )
    local = grid[sl]
    return {alpha: float(np.sum(tab * local)) for alpha, tab in tb.tables.items()}


def _eval_vector(space: DiscreteSpace, coeffs: np.ndarray, xi, max_deriv=0):
    """Per-component reference values/partials of a kind-1/2 field."""
    out = []
    for comp, spec in enumerate(space.component_specs):
        tb = eval_tensor(spec, xi, max_deriv)
        grid = _local_coeff_grid(space, coeffs, comp)
        sl = tuple(
            slice(f, f + kv.degree + 1) for f, kv in zip(tb.first_active, spec.kvs)
        )
        local = grid[sl]
        out.append({alpha: float(np.sum(tab * local)) for alpha, tab in tb.tables.items()})
    return out


def _jac_at(patch, xi):
    vals = map_values(patch, [np.array([v]) for v in np.atleast_1d(xi)], 1)
    DF = vals["DF"].reshape(patch.phys_dim, patch.ndim)
    det = float(vals["det"].reshape(()))
    return DF, det


class FieldSampler:
    """Evaluates a Solution at physical points with a point-location cache."""

    def __init__(self, solution: Solution):
        self.solution = solution
        self._cache: dict[tuple, tuple[int, np.ndarray]] = {}
        space = solution.space
        if isinstance(space, MultiPatchSpace):
            self.patches = [s.patch for s in space.spaces]
        else:
            self.patches = [space.patch]

    def _locate(self, x) -> tuple[int, np.ndarray]:
        from .geometry import invert_map

        key = tuple(np.round(np.asarray(x, float), 14))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        last_err = None
        for i, p in enumerate(self.patches):
            try:
                xi = invert_map(p, x)
            except PointLocationError as exc:
                last_err = exc
                continue
            self._cache[key] = (i, xi)
            return i, xi
        raise PointLocationError(
            f"point {tuple(np.asarray(x, float))} outside all patches"
        ) from last_err

    def _patch_data(self, ipatch: int):
        space = self.solution.space
        if isinstance(space, MultiPatchSpace):
            local_space = space.spaces[ipatch]
            coeffs = self.solution.coeffs[space.local_to_global[ipatch]]
        else:
            local_space = space
            coeffs = self.solution.coeffs
        return local_space, coeffs

    @property
    def is_scalar(self) -> bool:
        space = self.solution.space
        return isinstance(space, MultiPatchSpace) or space.kind in (0, 3)

    def value(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        if self.is_scalar:
            out = np.empty(len(pts))
            for k, x in enumerate(pts):
                i, xi = self._locate(x)
                space, coeffs = self._patch_data(i)
                out[k] = _eval_scalar(space, coeffs, xi, 0)[(0,) * space.ndim]
            return out
        d = self.patches[0].ndim
        out = np.empty((len(pts), d))
        for k, x in enumerate(pts):
            i, xi = self._locate(x)
            space, coeffs = self._patch_data(i)
            comp_tabs = _eval_vector(space, coeffs, xi, 0)
            vhat = np.array([t[(0,) * d] for t in comp_tabs])
            DF, det = _jac_at(self.patches[i], xi)
            if space.kind == 1:
                out[k] = np.linalg.solve(DF.T, vhat)
            else:
                out[k] = DF @ vhat / det
        return out

    def gradient(self, points) -> np.ndarray:
        if not self.is_scalar:
            raise ValidationError("gradient sampling is defined for scalar solutions")
        pts = np.atleast_2d(np.asarray(points, float))
        d = self.patches[0].ndim
        out = np.empty((len(pts), d))
        eye = np.eye(d, dtype=int)
        for k, x in enumerate(pts):
            i, xi = self._locate(x)
            space, coeffs = self._patch_data(i)
            tabs = _eval_scalar(space, coeffs, xi, 1)
            ghat = np.array([tabs[tuple(eye[a])] for a in range(d)])
            DF, _ = _jac_at(self.patches[i], xi)
            out[k] = np.linalg.solve(DF.T, ghat)
        return out

    def curl(self, points) -> np.ndarray:
        """Rotated gradient (du/dy, -du/dx) of scalar 2d solutions; the
        genuine curl for vector solutions."""
        pts = np.atleast_2d(np.asarray(points, float))
        if self.is_scalar:
            if self.patches[0].ndim != 2:
                raise ValidationError("scalar curl sampling is a 2d operation")
            g = self.gradient(pts)
            return np.column_stack([g[:, 1], -g[:, 0]])
        space = self.solution.space
        d = space.ndim
        if space.kind != 1:
            raise ValidationError("curl sampling needs a curl-conforming solution")
        out = np.empty((len(pts), 3 if d == 3 else 1))
        for k, x in enumerate(pts):
            i, xi = self._locate(x)
            local_space, coeffs = self._patch_data(i)
            tabs = _eval_vector(local_space, coeffs, xi, 1)
            DF, det = _jac_at(self.patches[i], xi)
            if d == 2:
                chat = tabs[1][(1, 0)] - tabs[0][(0, 1)]
                out[k, 0] = chat / det
            else:
                chat = np.array(
                    [
                        tabs[2][(0, 1, 0)] - tabs[1][(0, 0, 1)],
                        tabs[0][(0, 0, 1)] - tabs[2][(1, 0, 0)],
                        tabs[1][(1, 0, 0)] - tabs[0][(0, 1, 0)],
                    ]
                )
                out[k] = DF @ chat / det
        return out if out.shape[1] > 1 else out[:, 0]


def sample_field(solution: Solution, points, what: str = "value") -> np.ndarray:
    """Sample a solution at physical points: 'value', 'gradient' or 'curl'."""
    sampler = FieldSampler(solution)
    if what == "value":
        return sampler.value(points)
    if what == "gradient":
        return sampler.gradient(points)
    if what == "curl":
        return sampler.curl(points)
    raise ValidationError("what must be 'value', 'gradient' or 'curl'")


# ---------------------------------------------------------------------------
# Multipoles and field quality
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class MultipoleSet:
    """Normal multipole coefficients B_1..B_N at reference radius r0."""

    r0: float
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, float)
        if self.r0 <= 0.0:
            raise ValidationError("reference radius must be positive")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValidationError("multipole coefficients must be finite")

    def coefficient(self, n: int) -> float:
        if not 1 <= n <= len(self.coeffs):
            raise ValidationError(f"coefficient index {n} out of range")
        return float(self.coeffs[n - 1])


def multipole_coeffs(field, r0: float, order: int, center=(0.0, 0.0)) -> MultipoleSet:
    """Fourier coefficients of the radial field component on a circle.

    ``field`` is a callable mapping (N, 2) points to (N, 2) flux densities,
    or a FieldSampler of a 2d potential solution (its rotated gradient is
    used). Uses the trapezoidal rule with 4*order + 16 samples, which is
    exact for trigonometric polynomials up to well beyond ``order``.
    """
    if order < 1:
        raise ValidationError("order must be >= 1")
    if r0 <= 0.0:
        raise ValidationError("reference radius must be positive")
    if isinstance(field, FieldSampler):
        sampler = field
        field = lambda pts: sampler.curl(pts)  # noqa: E731
    nsamp = 4 * order + 16
    phi = np.linspace(0.0, 2.0 * np.pi, nsamp, endpoint=False)
    pts = np.column_stack(
        [center[0] + r0 * np.cos(phi), center[1] + r0 * np.sin(phi)]
    )
    B = np.asarray(field(pts), float)
    if B.shape != (nsamp, 2):
        raise ValidationError("field must return one 2-vector per sample point")
    Br = B[:, 0] * np.cos(phi) + B[:, 1] * np.sin(phi)
    ns = np.arange(1, order + 1)
    coeffs = (2.0 / nsamp) * np.sin(np.outer(ns, phi)) @ Br
    return MultipoleSet(r0=r0, coeffs=coeffs)


def quadrupole_gradient(mset: MultipoleSet) -> float:
    """g = 2 B_2 / r0^2 in the stored coefficient convention."""
    if len(mset.coeffs) < 2:
        raise ValidationError("quadrupole gradient needs at least two coefficients")
    return 2.0 * mset.coefficient(2) / mset.r0**2


def field_flatness(peaks) -> tuple[float, float]:
    """Flatness measures (eta1, eta2) of per-cell axis-field peaks.

    eta1 = (1 - (max|E| - min|E|)) / mean(|E|) applied verbatim, so peaks
    should be normalized by their mean when dimensional data is used.
    eta2 = 1 - std(E) / mean(|E|) with the population standard deviation.
    """
    peaks = np.atleast_1d(np.asarray(peaks, float))
    if peaks.size < 1:
        raise ValidationError("at least one peak value is required")
    mean_abs = float(np.mean(np.abs(peaks)))
    if mean_abs == 0.0:
        raise ValidationError("flatness undefined for zero mean peak amplitude")
    spread = float(np.max(np.abs(peaks)) - np.min(np.abs(peaks)))
    eta1 = (1.0 - spread) / mean_abs
    eta2 = 1.0 - float(np.std(peaks)) / mean_abs
    return eta1, eta2


def gradient_metrics(field, region, density: int = 16, fd_step: float | None = None) -> tuple[float, float]:
    """Average gradient tau_av and inhomogeneity eps over a beam rectangle.

    tau(x, y) = d|B|/dx by central differencing of the sampled magnitude;
    the region integrals use tensor Gauss quadrature with ``density`` points
    per direction. ``field`` maps (N, 2) points to |B| values, or is a
    FieldSampler of a potential solution.
    """
    x0, x1, y0, y1 = (float(v) for v in region)
    if not (x1 > x0 and y1 > y0):
        raise ValidationError("region must be a non-degenerate rectangle (x0, x1, y0, y1)")
    if density < 2:
        raise ValidationError("density must be >= 2")
    if isinstance(field, FieldSampler):
        sampler = field
        field = lambda pts: np.linalg.norm(sampler.curl(pts), axis=1)  # noqa: E731
    t, w = np.polynomial.legendre.leggauss(density)
    gx = x0 + (x1 - x0) * 0.5 * (t + 1.0)
    gy = y0 + (y1 - y0) * 0.5 * (t + 1.0)
    wx = 0.5 * (x1 - x0) * w
    wy = 0.5 * (y1 - y0) * w
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    W = np.outer(wx, wy)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    h = fd_step if fd_step is not None else 1e-6 * (x1 - x0)
    plus = pts.copy()
    plus[:, 0] += h
    minus = pts.copy()
    minus[:, 0] -= h
    tau = (np.asarray(field(plus), float) - np.asarray(field(minus), float)) / (2.0 * h)
    area = (x1 - x0) * (y1 - y0)
    tau_av = float(np.sum(W.ravel() * tau) / area)
    if tau_av == 0.0:
        raise ValidationError("average gradient vanishes; inhomogeneity is undefined")
    eps = math.sqrt(float(np.sum(W.ravel() * (tau / tau_av - 1.0) ** 2) / area))
    return tau_av, eps


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> None:
    """Locale-independent CSV with 17 significant digits for floats."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc}") from exc


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = [line.strip().split(",") for line in fh if line.strip()]
    if not data:
        return header, np.empty((0, len(header)))
    return header, np.array([[float(v) for v in row] for row in data])


def _solution_grids(solution: Solution, samples: int):
    """Per-patch reference sample grids with physical points and field data."""
    space = solution.space
    if isinstance(space, MultiPatchSpace):
        parts = [(s, solution.coeffs[space.local_to_global[i]]) for i, s in enumerate(space.spaces)]
    else:
        parts = [(space, solution.coeffs)]
    out = []
    for local_space, coeffs in parts:
        patch = local_space.patch
        d = patch.ndim
        axes = [np.linspace(0.0, 1.0, samples + 1)] * d
        vals = map_values(patch, axes, 1)
        F = vals["F"]
        fields: dict[str, np.ndarray] = {}
        grid_shape = F.shape[:-1]
        if local_space.kind == 0:
            u = np.empty(grid_shape)
            grad = np.empty(grid_shape + (d,))
            eye = np.eye(d, dtype=int)
            for idx in np.ndindex(*grid_shape):
                xi = np.array([axes[a][idx[a]] for a in range(d)])
                tabs = _eval_scalar(local_space, coeffs, xi, 1)
                u[idx] = tabs[(0,) * d]
                ghat = np.array([tabs[tuple(eye[a])] for a in range(d)])
                DF = vals["DF"][idx]
                grad[idx] = np.linalg.solve(DF.T, ghat)
            fields["u"] = u
            for a, nm in enumerate("xyz"[:d]):
                fields[f"grad_{nm}"] = grad[..., a]
            if d == 2:
                fields["B_x"] = grad[..., 1]
                fields["B_y"] = -grad[..., 0]
        else:
            vec = np.empty(grid_shape + (d,))
            for idx in np.ndindex(*grid_shape):
                xi = np.array([axes[a][idx[a]] for a in range(d)])
                tabs = _eval_vector(local_space, coeffs, xi, 0)
                vhat = np.array([t[(0,) * d] for t in tabs])
                DF = vals["DF"][idx]
                if local_space.kind == 1:
                    vec[idx] = np.linalg.solve(DF.T, vhat)
                else:
                    vec[idx] = DF @ vhat / np.linalg.det(DF)
            for a, nm in enumerate("xyz"[:d]):
                fields[f"v_{nm}"] = vec[..., a]
        out.append({"patch": patch, "points": F, "fields": fields})
    return out


def export(solution: Solution, fmt: str, path, samples: int = 8) -> list[str]:
    """Write sampled solution data as CSV (one file) or legacy VTK
    structured grids (one file per patch). Returns the written paths."""
    grids = _solution_grids(solution, samples)
    path = str(path)
    if fmt == "csv":
        m = grids[0]["points"].shape[-1]
        field_names = list(grids[0]["fields"])
        header = ["patch"] + list("xyz"[:m]) + field_names
        rows = []
        for ip, g in enumerate(grids):
            pts = g["points"].reshape(-1, m, order="F")
            cols = [g["fields"][nm].reshape(-1, order="F") for nm in field_names]
            for k in range(pts.shape[0]):
                rows.append([ip, *pts[k], *[c[k] for c in cols]])
        write_csv(path, header, rows)
        return [path]
    if fmt == "vtk":
        written = []
        multi = len(grids) > 1
        for ip, g in enumerate(grids):
            target = path if not multi else _patch_path(path, ip)
            write_vtk(target, g["points"], g["fields"])
            written.append(target)
        return written
    raise ValidationError("format must be 'csv' or 'vtk'")


def _patch_path(path: str, ipatch: int) -> str:
    if path.endswith(".vtk"):
        return f"{path[:-4]}_patch{ipatch}.vtk"
    return f"{path}_patch{ipatch}"


def write_vtk(path, points: np.ndarray, fields: dict) -> None:
    """Legacy ASCII structured-grid writer (point data only)."""
    grid_shape = points.shape[:-1]
    m = points.shape[-1]
    dims = list(grid_shape) + [1] * (3 - len(grid_shape))
    npts = int(np.prod(grid_shape))
    pts = points.reshape(-1, m, order="F")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write("spline patch sample\n")
            fh.write("ASCII\n")
            fh.write("DATASET STRUCTURED_GRID\n")
            fh.write(f"DIMENSIONS {dims[0]} {dims[1]} {dims[2]}\n")
            fh.write(f"POINTS {npts} double\n")
            for p in pts:
                coords = list(p) + [0.0] * (3 - m)
                fh.write(" ".join(_fmt(c) for c in coords) + "\n")
            fh.write(f"POINT_DATA {npts}\n")
            for name, data in fields.items():
                flat = data.reshape(-1, order="F")
                fh.write(f"SCALARS {name} double 1\n")
                fh.write("LOOKUP_TABLE default\n")
                for v in flat:
                    fh.write(_fmt(v) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK {path}: {exc}") from exc


def validate_vtk(path) -> dict:
    """Structural check of a legacy VTK file; returns dimensions and fields."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines[0].startswith("# vtk DataFile"):
        raise ValidationError("missing VTK header")
    if lines[2] != "ASCII" or lines[3] != "DATASET STRUCTURED_GRID":
        raise ValidationError("expected an ASCII structured grid")
    dims = tuple(int(v) for v in lines[4].split()[1:])
    npts = int(lines[5].split()[1])
    if int(np.prod(dims)) != npts:
        raise ValidationError("DIMENSIONS and POINTS disagree")
    cursor = 6
    for _ in range(npts):
        if len(lines[cursor].split()) != 3:
            raise ValidationError("points must have three coordinates")
        cursor += 1
    if not lines[cursor].startswith("POINT_DATA"):
        raise ValidationError("missing POINT_DATA")
    if int(lines[cursor].split()[1]) != npts:
        raise ValidationError("POINT_DATA count mismatch")
    cursor += 1
    fields = {}
    while cursor < len(lines) and lines[cursor].strip():
        head = lines[cursor].split()
        if head[0] != "SCALARS" or lines[cursor + 1] != "LOOKUP_TABLE default":
            raise ValidationError("unsupported point data block")
        name = head[1]
        cursor += 2
        vals = [float(lines[cursor + k]) for k in range(npts)]
        cursor += npts
        fields[name] = np.array(vals)
    return {"dimensions": dims, "n_points": npts, "fields": fields}


# ---------------------------------------------------------------------------
# Error norms
# ---------------------------------------------------------------------------

def l2_error(solution: Solution, exact, npts: int = 6) -> float:
    """L2 distance between a scalar solution and a callable of the physical
    coordinates, by per-patch Gauss quadrature."""
    from .assembly import gauss_spans

    space = solution.space
    if isinstance(space, MultiPatchSpace):
        parts = [(s, solution.coeffs[space.local_to_global[i]]) for i, s in enumerate(space.spaces)]
    else:
        parts = [(space, solution.coeffs)]
    total = 0.0
    for local_space, coeffs in parts:
        patch = local_space.patch
        d = patch.ndim
        axes, wts = [], []
        for ax in range(d):
            breaks = local_space.component_specs[0].kvs[ax].breakpoints()
            x, w = gauss_spans(breaks, npts)
            axes.append(x.ravel())
            wts.append(w.ravel())
        vals = map_values(patch, axes, 1)
        F, det = vals["F"], vals["det"]
        W = wts[0]
        for w in wts[1:]:
            W = np.multiply.outer(W, w)
        uh = np.empty(det.shape)
        for idx in np.ndindex(*det.shape):
            xi = np.array([axes[a][idx[a]] for a in range(d)])
            uh[idx] = _eval_scalar(local_space, coeffs, xi, 0)[(0,) * d]
        ue = np.asarray(exact(F.reshape(-1, patch.phys_dim, order="F")), float).reshape(det.shape, order="F")
        total += float(np.sum(W * det * (uh - ue) ** 2))
    return math.sqrt(total)
