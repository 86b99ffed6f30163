"""Element-local solver: submatrix assembly, local solve, operator extraction.

On one element the discrete transport balance reads

    (B - C + M - S) [u] = [f] - Bhat [uhat_in]

with B the outflow face term, Bhat the inflow face coupling, C the volume
advection, M the extinction mass, and S the scattering redistribution.
Spatial integrals use LGL collocation at the (p+1)^2 element nodes (diagonal
mass; variable-coefficient terms inexact by design, consistent at the
scheme's order).

Physical scaling via the affine reference map on an hx-by-hy element: volume
terms carry hx*hy/4, x-advection and vertical-face terms hy/2, y-advection
and horizontal-face terms hx/2. For a square element of size h this is the
usual (h/2)^2 / (h/2) split, and the inflow-to-solution map depends on
(h, sigma) only through the rescaled coefficients h*sigma/2.

Inverting the balance yields the inflow-to-solution map and the forcing
response; gathering outflow trace rows and angular averages yields the
inflow-to-outflow and inflow-to-mean operators that drive the global solve.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .angular import AngularGrid, PhaseKernel
from .basis import differentiation_matrix, lgl_quadrature
from .errors import SolverFailure
from .mesh import FACE_LEFT, FACE_RIGHT, ElementTraceMap

_SINGULAR_RCOND = 1e-14


def _element_sizes(h) -> tuple[float, float]:
    if np.isscalar(h):
        return float(h), float(h)
    hx, hy = h
    return float(hx), float(hy)


@dataclass(frozen=True)
class SigmaField:
    """Nodal extinction/scattering coefficients on the (p+1)^2 LGL grid.

    Arrays are indexed [ix, iy] on the element's tensor node grid and must
    be nonnegative.
    """

    sigma_e: np.ndarray
    sigma_s: np.ndarray

    def __post_init__(self):
        se, ss = np.asarray(self.sigma_e, float), np.asarray(self.sigma_s, float)
        if se.shape != ss.shape or se.ndim != 2:
            raise ValueError(f"coefficient grids must share a 2D shape, got {se.shape} vs {ss.shape}")
        if np.any(se < 0) or np.any(ss < 0):
            raise ValueError("optical coefficients must be nonnegative")
        object.__setattr__(self, "sigma_e", se)
        object.__setattr__(self, "sigma_s", ss)

    @classmethod
    def from_scattering(cls, sigma_s, omega: float) -> "SigmaField":
        """Single-coefficient mode: sigma_e = sigma_s / omega (albedo coupling)."""
        sigma_s = np.asarray(sigma_s, float)
        if not 0 < omega <= 1:
            raise ValueError(f"single-scattering albedo must be in (0, 1], got {omega}")
        return cls(sigma_e=sigma_s / omega, sigma_s=sigma_s)


@dataclass
class LocalMatrices:
    """The five element submatrices and the tested forcing vector."""

    b: np.ndarray      # (n_vol, n_vol) outflow face term (diagonal)
    bhat: np.ndarray   # (n_vol, n_in) inflow face coupling
    c: np.ndarray      # (n_vol, n_vol) volume advection
    m: np.ndarray      # (n_vol, n_vol) extinction mass (diagonal)
    s: np.ndarray      # (n_vol, n_vol) scattering redistribution
    f: np.ndarray      # (n_vol,)
    p: int
    h: tuple[float, float]


@dataclass
class LocalOperators:
    """Element-local solution maps.

    a_i2u/f_u are the full interior responses; a_i2o/fhat_u their outflow
    trace gathers; a_i2m/f_mean their angular averages. Surrogate-produced
    instances carry only (a_i2o, a_i2m) with zero forcing responses.
    """

    a_i2o: np.ndarray            # (n_out, n_in)
    a_i2m: np.ndarray            # (n_sp, n_in)
    fhat_u: np.ndarray           # (n_out,)
    f_mean: np.ndarray           # (n_sp,)
    a_i2u: np.ndarray | None = None  # (n_vol, n_in)
    f_u: np.ndarray | None = None    # (n_vol,)


class _ReferenceKernels:
    """sigma-independent assembly pieces for one (p, grid), unscaled."""

    def __init__(self, p: int, grid: AngularGrid):
        q = lgl_quadrature(p)
        d = differentiation_matrix(q)
        w = q.weights
        w1 = np.diag(w)
        adv1 = (w1 @ d).T  # adv1[i, j] = w_j * D[j, i]
        self.cx_vol = np.kron(np.kron(adv1, w1), np.diag(grid.cos_int))
        self.cy_vol = np.kron(np.kron(w1, adv1), np.diag(grid.sin_int))
        self.w2 = np.kron(w, w)  # node = ix*(p+1)+iy
        self.tracemap = ElementTraceMap(p, grid)
        tm = self.tracemap
        n_vol = (p + 1) ** 2 * grid.n_elems
        vert = np.isin(tm.outflow_face, (FACE_LEFT, FACE_RIGHT))
        self.b_diag_vert = np.zeros(n_vol)
        self.b_diag_horz = np.zeros(n_vol)
        np.add.at(self.b_diag_vert, tm.outflow_vol[vert],
                  (tm.outflow_wnode * tm.outflow_flux)[vert])
        np.add.at(self.b_diag_horz, tm.outflow_vol[~vert],
                  (tm.outflow_wnode * tm.outflow_flux)[~vert])
        bhat = np.zeros((n_vol, tm.n_in))
        bhat[tm.inflow_vol, np.arange(tm.n_in)] = tm.inflow_wnode * tm.inflow_flux
        self.bhat = bhat
        self.bhat_col_vert = np.isin(tm.inflow_face, (FACE_LEFT, FACE_RIGHT))
        self.p = p
        self.n_vol = n_vol


_kernel_cache: dict[tuple, _ReferenceKernels] = {}


def reference_kernels(p: int, grid: AngularGrid) -> _ReferenceKernels:
    key = (p, grid.n_elems, grid.p_a)
    if key not in _kernel_cache:
        _kernel_cache[key] = _ReferenceKernels(p, grid)
    return _kernel_cache[key]


def assemble_local(sigma: SigmaField, grid: AngularGrid, kernel: PhaseKernel,
                   h, f=None) -> LocalMatrices:
    """Assemble the element submatrices on an element of size h (scalar or (hx, hy))."""
    p = sigma.sigma_e.shape[0] - 1
    if sigma.sigma_e.shape != (p + 1, p + 1):
        raise ValueError(f"coefficient grid must be square, got {sigma.sigma_e.shape}")
    if kernel.kernel.shape != (grid.n_elems, grid.n_elems):
        raise ValueError("phase kernel does not match the angular grid")
    hx, hy = _element_sizes(h)
    ref = reference_kernels(p, grid)
    na = grid.n_elems
    n_sp = (p + 1) ** 2
    half_x, half_y = 0.5 * hx, 0.5 * hy
    vol_scale = half_x * half_y

    b = np.diag(half_y * ref.b_diag_vert + half_x * ref.b_diag_horz)
    col_scale = np.where(ref.bhat_col_vert, half_y, half_x)
    bhat = ref.bhat * col_scale[None, :]
    c = half_y * ref.cx_vol + half_x * ref.cy_vol
    se = sigma.sigma_e.reshape(n_sp)
    ss = sigma.sigma_s.reshape(n_sp)
    m = np.diag(vol_scale * np.outer(ref.w2 * se, grid.widths).reshape(-1))
    # separable scattering: (sigma_s-weighted collocation mass) x (angular kernel)
    s = np.zeros((ref.n_vol, ref.n_vol))
    s4 = s.reshape(n_sp, na, n_sp, na)
    coef = vol_scale * ref.w2 * ss
    for n in range(n_sp):
        s4[n, :, n, :] = coef[n] * kernel.kernel

    fvec = np.zeros(ref.n_vol)
    if f is not None:
        f = np.asarray(f, float)
        if f.shape == (p + 1, p + 1):
            fvec = vol_scale * np.outer(ref.w2 * f.reshape(n_sp), grid.widths).reshape(-1)
        elif f.shape == (p + 1, p + 1, na):
            fvec = vol_scale * (ref.w2[:, None] * f.reshape(n_sp, na) * grid.widths[None, :]).reshape(-1)
        else:
            raise ValueError(f"forcing shape {f.shape} incompatible with p={p}, N_a={na}")
    return LocalMatrices(b=b, bhat=bhat, c=c, m=m, s=s, f=fvec, p=p, h=(hx, hy))


def local_solve(mats: LocalMatrices, element_index=None):
    """Invert the local balance: returns (a_i2u, f_u).

    One dense LU factorization (partial pivoting) serves all inflow
    right-hand sides and the forcing response.
    """
    a = mats.b - mats.c + mats.m - mats.s
    try:
        with warnings.catch_warnings():
            # singularity is detected below and raised as SolverFailure
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise SolverFailure(f"local factorization failed on element {element_index}") from exc
    udiag = np.abs(np.diag(lu))
    if udiag.min() <= _SINGULAR_RCOND * udiag.max():
        raise SolverFailure(f"singular local matrix on element {element_index}")
    a_i2u = -scipy.linalg.lu_solve((lu, piv), mats.bhat, check_finite=False)
    f_u = scipy.linalg.lu_solve((lu, piv), mats.f, check_finite=False)
    return a_i2u, f_u


def extract_operators(a_i2u: np.ndarray, f_u: np.ndarray, tracemap: ElementTraceMap,
                      grid: AngularGrid) -> LocalOperators:
    """Gather the outflow-trace and angular-average restrictions."""
    n_sp = (tracemap.p + 1) ** 2
    na = grid.n_elems
    mw = grid.mean_weights
    a_i2o = a_i2u[tracemap.outflow_vol, :]
    fhat_u = f_u[tracemap.outflow_vol]
    a_i2m = np.einsum("a,nak->nk", mw, a_i2u.reshape(n_sp, na, -1))
    f_mean = f_u.reshape(n_sp, na) @ mw
    return LocalOperators(a_i2o=a_i2o, a_i2m=a_i2m, fhat_u=fhat_u, f_mean=f_mean,
                          a_i2u=a_i2u, f_u=f_u)


def solve_element(sigma: SigmaField, grid: AngularGrid, kernel: PhaseKernel,
                  h, f=None, element_index=None) -> LocalOperators:
    """assemble + solve + extract for one element (the exact local pipeline)."""
    mats = assemble_local(sigma, grid, kernel, h, f=f)
    a_i2u, f_u = local_solve(mats, element_index=element_index)
    return extract_operators(a_i2u, f_u, reference_kernels(mats.p, grid).tracemap, grid)


def element_trace_map(p: int, grid: AngularGrid) -> ElementTraceMap:
    """Shared (cached) canonical trace map for (p, grid)."""
    return reference_kernels(p, grid).tracemap
