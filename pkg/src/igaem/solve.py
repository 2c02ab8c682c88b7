"""Formulation-level drivers: magnetostatic Poisson solves and Maxwell
cavity eigenproblems.

Eigenvalue problems K e = lambda M e are reduced densely (Cholesky-based
LAPACK path) up to 4000 unknowns and use shift-invert Lanczos above that.
The gradient kernel of the curl-curl operator is filtered by a threshold
relative to a Gershgorin-style estimate of the largest eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import apply_dirichlet, op_curlu_curlv, op_f_v, op_gradu_gradv, op_u_v
from .errors import SolverError, ValidationError
from .geometry import MultiPatch, Patch, as_multipatch
from .spaces import (
    MultiPatchSpace,
    boundary_dofs,
    couple_scalar_multipatch,
    make_space,
    multipatch_boundary_dofs,
)

DENSE_EIG_CAP = 4000
MAX_EIG_DOFS = 40000
KERNEL_TAU = 1e-8


@dataclass(eq=False)
class PhysicalConstants:
    """Vacuum permittivity/permeability (SI) with optional relative scalars."""

    eps0: float = 8.8541878128e-12
    mu0: float = 1.25663706212e-6
    eps_r: float = 1.0
    mu_r: float = 1.0

    def __post_init__(self):
        if min(self.eps0, self.mu0, self.eps_r, self.mu_r) <= 0.0:
            raise ValidationError("physical constants must be positive")

    @property
    def light_speed(self) -> float:
        return 1.0 / np.sqrt(self.eps0 * self.mu0 * self.eps_r * self.mu_r)


@dataclass(eq=False)
class Solution:
    """Coefficient vector together with its owning space."""

    space: object
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, float)
        if self.coeffs.shape != (self.space.dof_count,):
            raise ValidationError("coefficient length must equal the space dimension")


@dataclass(eq=False)
class EigenResult:
    """Kernel-filtered ascending eigenpairs of K e = lambda M e.

    ``vectors`` holds one column per eigenvalue (full-length when produced by
    a driver, reduced otherwise). ``frequencies`` is populated only when a
    physical length scale is supplied.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    kernel_count: int
    residuals: np.ndarray
    frequencies: np.ndarray | None = None
    space: object = None

    def solution(self, idx: int) -> Solution:
        if self.space is None:
            raise ValidationError("this eigenresult does not carry a space")
        return Solution(self.space, self.vectors[:, idx])


def _gershgorin_lambda_max(K: sp.csr_matrix, M: sp.csr_matrix) -> float:
    row_sums = np.asarray(np.abs(K).sum(axis=1)).ravel()
    mdiag = M.diagonal()
    if np.any(mdiag <= 0.0):
        raise SolverError("mass matrix must have a positive diagonal")
    return float(np.max(row_sums / mdiag))


def solve_eigs(K, M, count: int, shift: float | None = None, tau_kernel: float = KERNEL_TAU) -> EigenResult:
    """Smallest ``count`` generalized eigenpairs above the kernel threshold.

    Kernel eigenvalues (below tau_kernel times a Gershgorin-based estimate of
    the largest eigenvalue) are counted and excluded. Dense symmetric
    reduction up to 4000 unknowns, shift-invert Lanczos beyond.
    """
    K = sp.csr_matrix(K)
    M = sp.csr_matrix(M)
    n = K.shape[0]
    if K.shape != (n, n) or M.shape != (n, n):
        raise ValidationError("K and M must be square and of equal size")
    if count < 1:
        raise ValidationError("count must be >= 1")
    scale = float(np.abs(K.data).max()) if K.nnz else 1.0
    asym = float(np.abs(K - K.T).max()) if K.nnz else 0.0
    if asym > 1e-8 * max(scale, 1.0):
        raise ValidationError("stiffness matrix is not symmetric")
    lam_max_est = _gershgorin_lambda_max(K, M)
    thr = tau_kernel * lam_max_est

    if n <= DENSE_EIG_CAP:
        try:
            w, V = sla.eigh(K.toarray(), M.toarray())
        except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
            raise SolverError(f"mass matrix is not positive definite: {exc}") from exc
        kernel_count = int(np.searchsorted(w, thr))
        sel = np.arange(kernel_count, min(kernel_count + count, n))
        lam, vec = w[sel], V[:, sel]
    else:
        sigma = float(shift) if shift is not None else thr
        k = min(count + 32, n - 1)
        lam = vec = None
        for _ in range(4):
            try:
                w, V = spla.eigsh(K, k=k, M=M, sigma=sigma, which="LM")
            except spla.ArpackNoConvergence as exc:
                raise SolverError(f"eigensolver did not converge: {exc}") from exc
            order = np.argsort(w)
            w, V = w[order], V[:, order]
            nz = w >= thr
            if np.count_nonzero(nz) >= count or k >= n - 1:
                kernel_count = int(np.count_nonzero(~nz))
                keep = np.nonzero(nz)[0][:count]
                lam, vec = w[keep], V[:, keep]
                break
            k = min(2 * k, n - 1)
        if lam is None:
            raise SolverError("could not find enough eigenvalues above the kernel")
        kernel_count = int(kernel_count)

    residuals = np.zeros(len(lam))
    for i, (lv, v) in enumerate(zip(lam, vec.T)):
        r = K @ v - lv * (M @ v)
        vnorm = float(np.sqrt(v @ (M @ v)))
        residuals[i] = np.linalg.norm(r) / (abs(lv) * vnorm) if lv != 0.0 else np.linalg.norm(r)
    return EigenResult(
        eigenvalues=np.asarray(lam), vectors=np.asarray(vec),
        kernel_count=kernel_count, residuals=residuals,
    )


def _attach_frequencies(res: EigenResult, constants: PhysicalConstants | None, length_scale: float | None):
    if constants is not None and length_scale is not None:
        if length_scale <= 0.0:
            raise ValidationError("length scale must be positive")
        omega = np.sqrt(np.maximum(res.eigenvalues, 0.0)) * constants.light_speed / length_scale
        res.frequencies = omega / (2.0 * np.pi)
    return res


# ---------------------------------------------------------------------------
# Scalar multipatch assembly helpers
# ---------------------------------------------------------------------------

def _per_patch(value, npatches: int):
    if np.isscalar(value) or callable(value):
        return [value] * npatches
    seq = list(value)
    if len(seq) != npatches:
        raise ValidationError(f"expected one coefficient per patch ({npatches}), got {len(seq)}")
    return seq


def assemble_scalar(mp_space: MultiPatchSpace, op, coeff) -> sp.csr_matrix:
    """Assemble a per-patch operator into the global C0 space."""
    n = mp_space.dof_count
    coeffs = _per_patch(coeff, len(mp_space.spaces))
    rows, cols, vals = [], [], []
    for i, space in enumerate(mp_space.spaces):
        A = op(space, coeffs[i]).tocoo()
        g = mp_space.local_to_global[i]
        rows.append(g[A.row])
        cols.append(g[A.col])
        vals.append(A.data)
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()


def assemble_scalar_rhs(mp_space: MultiPatchSpace, source) -> np.ndarray:
    b = np.zeros(mp_space.dof_count)
    sources = _per_patch(source, len(mp_space.spaces))
    for i, space in enumerate(mp_space.spaces):
        np.add.at(b, mp_space.local_to_global[i], op_f_v(space, sources[i]))
    return b


def _normalize_dirichlet(mp_space: MultiPatchSpace, dirichlet):
    """Return (global dof array, value array)."""
    if dirichlet is None:
        return np.array([], dtype=int), np.array([])
    if dirichlet == "all":
        dirichlet = {"all": 0.0}
    if isinstance(dirichlet, dict) and "all" in dirichlet and len(dirichlet) == 1:
        value = float(dirichlet["all"])
        sides = mp_space.multipatch.outer_sides()
        items = [(ps, value) for ps in sides]
    elif isinstance(dirichlet, dict):
        items = [(k, float(v)) for k, v in dirichlet.items()]
    else:
        raise ValidationError("dirichlet must be 'all', {'all': value} or {(patch, side): value}")
    n = mp_space.dof_count
    values = np.zeros(n)
    mask = np.zeros(n, dtype=bool)
    for (ipatch, side), value in items:
        local = boundary_dofs(mp_space.spaces[ipatch], side)
        g = mp_space.global_indices(ipatch, local)
        values[g] = value
        mask[g] = True
    dofs = np.nonzero(mask)[0]
    return dofs, values[dofs]


def solve_poisson(mp_space: MultiPatchSpace, nu, source, dirichlet="all") -> Solution:
    """Galerkin solution of -div(nu grad u) = f on a scalar multipatch space.

    ``nu`` and ``source`` are scalars, per-patch sequences, or callables of
    the physical coordinates. Dirichlet data is applied by elimination; a
    solve without any Dirichlet side is rejected (the operator has the
    constants in its kernel, fix the gauge by constraining at least one side).
    """
    K = assemble_scalar(mp_space, op_gradu_gradv, nu)
    b = assemble_scalar_rhs(mp_space, source)
    dofs, values = _normalize_dirichlet(mp_space, dirichlet)
    if dofs.size == 0:
        raise SolverError(
            "pure Neumann problem is singular: fix the gauge by adding a Dirichlet side"
        )
    K_red, b_red, rec = apply_dirichlet(K, b, dofs, values)
    if K_red.shape[0]:
        x = spla.spsolve(K_red.tocsc(), b_red)
        if not np.all(np.isfinite(x)):
            raise SolverError("direct solve produced non-finite values")
    else:
        x = np.zeros(0)
    return Solution(mp_space, rec.expand(x))


# ---------------------------------------------------------------------------
# Maxwell eigenvalue drivers
# ---------------------------------------------------------------------------

def _single_patch(geometry) -> Patch:
    if isinstance(geometry, Patch):
        return geometry
    if isinstance(geometry, MultiPatch) and len(geometry.patches) == 1:
        return geometry.patches[0]
    raise ValidationError("this formulation supports a single patch only")


def maxwell_eigs_2d(
    geometry,
    formulation: str,
    degrees=None,
    refine=None,
    count: int = 5,
    constants: PhysicalConstants | None = None,
    length_scale: float | None = None,
    tau_kernel: float = KERNEL_TAU,
) -> EigenResult:
    """Cavity eigenvalues of a 2d cross-section.

    'te': in-plane electric field on a single patch, curl-conforming space
    with PEC (tangential trace eliminated) on every side. 'tm': longitudinal
    field, scalar C0 multipatch space with homogeneous Dirichlet boundary.
    """
    if formulation == "te":
        patch = _single_patch(geometry)
        if patch.ndim != 2:
            raise ValidationError("te formulation needs a 2d patch")
        space = make_space(patch, 1, degrees, refine)
        K = op_curlu_curlv(space, 1.0)
        M = op_u_v(space, 1.0)
        pec = boundary_dofs(space, "all")
        K_red, M_red, rec = apply_dirichlet(K, M, pec)
        res = solve_eigs(K_red, M_red, count, tau_kernel=tau_kernel)
        res.vectors = rec.expand(res.vectors)
        res.space = space
        return _attach_frequencies(res, constants, length_scale)
    if formulation == "tm":
        mp = as_multipatch(geometry)
        if mp.ndim != 2:
            raise ValidationError("tm formulation needs 2d patches")
        mp_space = couple_scalar_multipatch(mp, degrees, refine)
        K = assemble_scalar(mp_space, op_gradu_gradv, 1.0)
        M = assemble_scalar(mp_space, op_u_v, 1.0)
        pec = multipatch_boundary_dofs(mp_space)
        K_red, M_red, rec = apply_dirichlet(K, M, pec)
        res = solve_eigs(K_red, M_red, count, tau_kernel=tau_kernel)
        res.vectors = rec.expand(res.vectors)
        res.space = mp_space
        return _attach_frequencies(res, constants, length_scale)
    raise ValidationError("formulation must be 'te' or 'tm'")


def maxwell_eigs_3d(
    geometry,
    degrees=None,
    refine=None,
    count: int = 5,
    constants: PhysicalConstants | None = None,
    length_scale: float | None = None,
    tau_kernel: float = KERNEL_TAU,
) -> EigenResult:
    """Cavity eigenvalues of a 3d volume: curl-conforming space, PEC walls."""
    patch = _single_patch(geometry)
    if patch.ndim != 3:
        raise ValidationError("the 3d driver needs a 3d patch")
    space = make_space(patch, 1, degrees, refine)
    if space.dof_count > MAX_EIG_DOFS:
        raise ValidationError(
            f"problem size {space.dof_count} exceeds the supported {MAX_EIG_DOFS} DOFs; "
            "use a coarser refinement or lower degree"
        )
    K = op_curlu_curlv(space, 1.0)
    M = op_u_v(space, 1.0)
    pec = boundary_dofs(space, "all")
    K_red, M_red, rec = apply_dirichlet(K, M, pec)
    res = solve_eigs(K_red, M_red, count, tau_kernel=tau_kernel)
    res.vectors = rec.expand(res.vectors)
    res.space = space
    return _attach_frequencies(res, constants, length_scale)
