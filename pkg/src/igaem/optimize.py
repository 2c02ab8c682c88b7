"""Control-point design vectors, finite-difference gradients, bounded
quasi-Newton descent, and worst-case shape perturbation estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError, ValidationError
from .geometry import MultiPatch, Patch

_AXIS_COLUMN = {"x": 0, "y": 1, "z": 2}


@dataclass(eq=False)
class DesignEntry:
    """One free scalar: a control-point coordinate or weight of a patch."""

    patch: int
    index: int
    axis: str  # 'x', 'y', 'z' or 'w'
    base: float = 0.0


@dataclass(eq=False)
class DesignVector:
    """Named subset of control data with box bounds and current values.

    Fixed control points are simply absent. Weight entries must keep
    positive lower bounds.
    """

    entries: list[DesignEntry]
    bounds: np.ndarray
    x: np.ndarray = field(default=None)

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, float)
        if self.bounds.shape != (len(self.entries), 2):
            raise ValidationError("bounds must be an (n, 2) array of [lo, hi]")
        if np.any(self.bounds[:, 0] > self.bounds[:, 1]):
            raise ValidationError("lower bounds must not exceed upper bounds")
        if self.x is None:
            self.x = np.array([e.base for e in self.entries], float)
        self.x = np.asarray(self.x, float)
        if self.x.shape != (len(self.entries),):
            raise ValidationError("one current value per design entry required")
        if np.any(self.x < self.bounds[:, 0]) or np.any(self.x > self.bounds[:, 1]):
            raise ValidationError("current values violate the bounds")
        for e, (lo, _) in zip(self.entries, self.bounds):
            if e.axis == "w" and lo <= 0.0:
                raise ValidationError("weight entries need a positive lower bound")
            if e.axis not in ("w", "x", "y", "z"):
                raise ValidationError(f"unknown design axis {e.axis!r}")

    @classmethod
    def from_geometry(cls, mp: MultiPatch, raw_entries) -> "DesignVector":
        """Build from (patch, index, axis, lo, hi) tuples; base values are
        read off the geometry."""
        entries, bounds = [], []
        for patch_i, index, axis, lo, hi in raw_entries:
            p = mp.patches[patch_i]
            if not 0 <= index < p.basis.dim:
                raise ValidationError("control point index out of range")
            if axis == "w":
                base = float(p.weights[index])
            else:
                base = float(p.control_points[index, _AXIS_COLUMN[axis]])
            entries.append(DesignEntry(patch_i, int(index), axis, base))
            bounds.append((float(lo), float(hi)))
        return cls(entries, np.asarray(bounds))

    def apply(self, mp: MultiPatch, x=None) -> MultiPatch:
        """Geometry with the design values written into the control data."""
        x = self.x if x is None else np.asarray(x, float)
        if x.shape != (len(self.entries),):
            raise ValidationError("design value count mismatch")
        cps = [p.control_points.copy() for p in mp.patches]
        wts = [p.weights.copy() for p in mp.patches]
        for e, v in zip(self.entries, x):
            if e.axis == "w":
                wts[e.patch][e.index] = v
            else:
                cps[e.patch][e.index, _AXIS_COLUMN[e.axis]] = v
        patches = [
            Patch(p.basis, cp, w, p.label)
            for p, cp, w in zip(mp.patches, cps, wts)
        ]
        return MultiPatch(patches, mp.interfaces)


@dataclass(eq=False)
class Objective:
    """Shape objective: write design values into the geometry, re-solve,
    reduce to a scalar."""

    geometry: MultiPatch
    design: DesignVector
    evaluate_geometry: object  # callable MultiPatch -> float

    def __call__(self, x) -> float:
        return float(self.evaluate_geometry(self.design.apply(self.geometry, x)))


def _default_steps(x, h, bounds):
    x = np.asarray(x, float)
    if h is not None:
        return np.full(x.shape, float(h))
    if bounds is not None:
        rng = np.asarray(bounds, float)[:, 1] - np.asarray(bounds, float)[:, 0]
        return np.where(rng > 0, 1e-6 * rng, 1e-6)
    return 1e-6 * np.maximum(1.0, np.abs(x))


def fd_gradient(obj, x, h=None, bounds=None) -> np.ndarray:
    """Central-difference gradient; steps are clipped one-sided at bounds.

    The default step is 1e-6 of each entry's bound range (or of the value
    magnitude without bounds).
    """
    x = np.asarray(x, float)
    steps = _default_steps(x, h, bounds)
    lo = hi = None
    if bounds is not None:
        b = np.asarray(bounds, float)
        lo, hi = b[:, 0], b[:, 1]
    g = np.zeros_like(x)
    for i in range(len(x)):
        hp = hm = steps[i]
        if lo is not None:
            hp = min(hp, hi[i] - x[i])
            hm = min(hm, x[i] - lo[i])
        xp, xm = x.copy(), x.copy()
        xp[i] += hp
        xm[i] -= hm
        if hp + hm <= 0.0:
            raise ValidationError(f"bounds leave no room for a step on entry {i}")
        try:
            fp, fm = float(obj(xp)), float(obj(xm))
        except Exception as exc:  # noqa: BLE001 - annotate and re-raise
            raise SolverError(f"objective evaluation failed near entry {i}: {exc}") from exc
        g[i] = (fp - fm) / (hp + hm)
    return g


def minimize_bounded(obj, x0, bounds, options=None):
    """Projected quasi-Newton (BFGS) descent with finite-difference gradients.

    Terminates on step < step_tol, projected-gradient norm < grad_tol, or
    maxiter iterations. Returns (x_best, f_best, trace) where trace records
    every objective evaluation as (x, f). Never evaluates outside bounds.
    """
    opts = {"maxiter": 200, "step_tol": 1e-8, "grad_tol": 1e-6, "fd_step": None}
    opts.update(options or {})
    bounds = np.asarray(bounds, float)
    x0 = np.asarray(x0, float)
    n = len(x0)
    if bounds.shape != (n, 2):
        raise ValidationError("bounds must be an (n, 2) array")
    if np.any(x0 < bounds[:, 0]) or np.any(x0 > bounds[:, 1]):
        raise ValidationError("starting point violates the bounds")
    lo, hi = bounds[:, 0], bounds[:, 1]
    trace: list[tuple[np.ndarray, float]] = []

    def feval(x):
        f = float(obj(x))
        trace.append((x.copy(), f))
        if not np.isfinite(f):
            err = SolverError("objective returned a non-finite value")
            err.trace = trace
            raise err
        return f

    def grad(x):
        return fd_gradient(feval, x, h=opts["fd_step"], bounds=bounds)

    def projected_gradient(x, g):
        pg = g.copy()
        pg[(x <= lo) & (g > 0)] = 0.0
        pg[(x >= hi) & (g < 0)] = 0.0
        return pg

    x = np.clip(x0, lo, hi)
    f = feval(x)
    H = np.eye(n)
    g = grad(x)
    for _ in range(int(opts["maxiter"])):
        pg = projected_gradient(x, g)
        if np.linalg.norm(pg) < opts["grad_tol"]:
            break
        p = -H @ pg
        if p @ pg >= 0.0:  # not a descent direction, reset curvature
            H = np.eye(n)
            p = -pg
        alpha, accepted = 1.0, False
        for _ in range(40):
            x_new = np.clip(x + alpha * p, lo, hi)
            s = x_new - x
            if np.linalg.norm(s) == 0.0:
                break
            f_new = feval(x_new)
            if f_new <= f + 1e-4 * (g @ s):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        g_new = grad(x_new)
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            I = np.eye(n)
            H = (I - rho * np.outer(s, y)) @ H @ (I - rho * np.outer(y, s)) + rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
        if np.linalg.norm(s) < opts["step_tol"]:
            break
    best = min(range(len(trace)), key=lambda k: trace[k][1])
    return trace[best][0].copy(), trace[best][1], trace


def worst_case_linear(obj, x0, s: float) -> float:
    """First-order worst case s * ||grad obj(x0)||_1 for per-entry
    perturbations bounded by s."""
    if s <= 0.0:
        raise ValidationError("perturbation magnitude must be positive")
    x0 = np.asarray(x0, float)
    bounds = np.column_stack([x0 - s, x0 + s])
    g = fd_gradient(obj, x0, bounds=bounds)
    return float(s * np.sum(np.abs(g)))


def worst_case_direct(obj, x0, s: float, options=None):
    """Maximum deviation |obj(x) - obj(x0)| over the box |x - x0|_inf <= s.

    Probes every corner (all 2^k for k <= 6, otherwise 64 random ones) plus
    bounded descent runs on +/- obj from the best starts. Returns
    (wcs, argmax); by construction wcs >= the deviation at every probed
    corner.
    """
    if s <= 0.0:
        raise ValidationError("perturbation magnitude must be positive")
    x0 = np.asarray(x0, float)
    n = len(x0)
    bounds = np.column_stack([x0 - s, x0 + s])
    f0 = float(obj(x0))
    if n <= 6:
        signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * n, indexing="ij")).reshape(n, -1).T
    else:
        rng = np.random.default_rng(0)
        signs = rng.choice([-1.0, 1.0], size=(64, n))
    corners = x0 + s * signs
    best_x, best_dev = x0.copy(), 0.0
    corner_devs = []
    for c in corners:
        dev = abs(float(obj(c)) - f0)
        corner_devs.append((dev, c))
        if dev > best_dev:
            best_dev, best_x = dev, c.copy()
    corner_devs.sort(key=lambda t: -t[0])
    starts = [c for _, c in corner_devs[:4]] + [x0]
    opts = {"maxiter": 60}
    opts.update(options or {})
    for sign in (1.0, -1.0):
        for x_start in starts:
            xs, fs, _ = minimize_bounded(lambda x: sign * (float(obj(x)) - f0), x_start, bounds, opts)
            dev = abs(fs)
            if dev > best_dev:
                best_dev, best_x = dev, xs
    return best_dev, best_x


def goal_stern_gerlach(tau_av: float, eps: float, tau_w: float) -> float:
    """Deflection-magnet goal: tau_w/|tau_av| + eps - (tau_w/|tau_av|) eps."""
    if tau_av == 0.0:
        raise ValidationError("goal undefined for zero average gradient")
    r = tau_w / abs(tau_av)
    return r + eps - r * eps
