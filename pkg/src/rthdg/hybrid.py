"""Skeleton system: boundary projection, matrix-free GMRES solve, recovery.

The hybrid unknown lives on mesh faces; the global equations impose, on every
free trace DOF (interior faces plus outflow boundary), that the skeleton
value equals the outflow trace produced by the owning element:

    uhat_out - A_i2o uhat_in = fhat_u      (per element, on its outflow slots)

Inflow-boundary DOFs are fixed to the projected boundary data and eliminated;
the remaining linear system is solved with restarted GMRES applying the
per-element dense blocks matrix-free.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg

from .basis import lagrange_basis_at, lgl_quadrature
from .errors import SolverFailure
from .mesh import Mesh, SkeletonIndex

GMRES_RESTART = 200


@dataclass
class SkeletonState:
    """Hybrid DOF vector plus the mask of Dirichlet-fixed (boundary inflow) DOFs."""

    values: np.ndarray
    dirichlet_mask: np.ndarray


@dataclass
class HybridSolveInfo:
    iterations: int
    residuals: list = field(default_factory=list)


def project_boundary(g, index: SkeletonIndex) -> SkeletonState:
    """Project boundary radiance onto the inflow-boundary hybrid DOFs.

    g(x, y, theta, normal) is sampled at face LGL nodes and angular-element
    midpoints (the collocation projection at p_a = 0); all other DOFs start
    at zero.
    """
    values = np.zeros(index.n_dofs)
    for dof, x, y, theta, normal in index.boundary_inflow_records():
        values[dof] = g(x, y, theta, normal)
    return SkeletonState(values=values, dirichlet_mask=index.dirichlet_mask.copy())


class HybridSystem:
    """Affine skeleton operator assembled from per-element in2out blocks."""

    def __init__(self, index: SkeletonIndex, ops_list):
        mesh = index.mesh
        if len(ops_list) != mesh.n_elems:
            raise ValueError(f"need one LocalOperators per element "
                             f"({mesh.n_elems}), got {len(ops_list)}")
        self.index = index
        self.a_i2o = np.stack([ops.a_i2o for ops in ops_list])
        self.fhat = np.stack([ops.fhat_u for ops in ops_list])
        self.in_idx = index.elem_inflow
        # every free DOF is the outflow slot of exactly one element
        self.out_free = index.free_index[index.elem_outflow]
        if np.any(self.out_free < 0):
            raise AssertionError("outflow slot marked Dirichlet; numbering inconsistent")

    @property
    def n_free(self) -> int:
        return self.index.n_free

    def linear_action(self, v_free: np.ndarray) -> np.ndarray:
        """Linear part of the consistency residual on free DOFs."""
        v_free = np.asarray(v_free, dtype=float)
        u = np.zeros(self.index.n_dofs)
        u[~self.index.dirichlet_mask] = v_free
        r = v_free.copy()
        y = np.einsum("eij,ej->ei", self.a_i2o, u[self.in_idx])
        r[self.out_free.reshape(-1)] -= y.reshape(-1)
        return r

    def rhs(self, bc: SkeletonState) -> np.ndarray:
        """Right-hand side from Dirichlet data and per-element forcing responses."""
        ug = np.zeros(self.index.n_dofs)
        fixed = self.index.dirichlet_mask
        ug[fixed] = bc.values[fixed]
        y = np.einsum("eij,ej->ei", self.a_i2o, ug[self.in_idx]) + self.fhat
        b = np.zeros(self.n_free)
        b[self.out_free.reshape(-1)] = y.reshape(-1)
        return b

    def residual_action(self, uhat_full: np.ndarray) -> np.ndarray:
        """Affine consistency residual of a full skeleton vector, on free DOFs."""
        y = np.einsum("eij,ej->ei", self.a_i2o, uhat_full[self.in_idx]) + self.fhat
        r = np.empty(self.n_free)
        r[self.out_free.reshape(-1)] = (uhat_full[self.index.elem_outflow]
                                        - y).reshape(-1)
        return r


def assemble_hybrid(index: SkeletonIndex, ops_list) -> HybridSystem:
    return HybridSystem(index, ops_list)


def solve_hybrid(system: HybridSystem, bc: SkeletonState, tol: float = 1e-4,
                 restart: int = GMRES_RESTART):
    """GMRES on the free hybrid DOFs; returns (SkeletonState, HybridSolveInfo).

    Right-hand-side-relative stopping; restarted at `restart` with an outer
    cycle cap of 10 * n_free / restart; no preconditioner.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    b = system.rhs(bc)
    full = bc.values.copy()
    info = HybridSolveInfo(iterations=0)
    if not np.any(b):
        full[~system.index.dirichlet_mask] = 0.0
        return SkeletonState(values=full, dirichlet_mask=bc.dirichlet_mask), info

    def _cb(pr_norm):
        info.iterations += 1
        info.residuals.append(float(pr_norm))

    op = scipy.sparse.linalg.LinearOperator(
        (system.n_free, system.n_free), matvec=system.linear_action)
    maxiter = max(1, int(np.ceil(10 * system.n_free / restart)))
    x, code = scipy.sparse.linalg.gmres(
        op, b, rtol=tol, atol=0.0, restart=restart, maxiter=maxiter,
        callback=_cb, callback_type="pr_norm")
    if code != 0:
        raise SolverFailure(
            f"hybrid GMRES did not reach rtol={tol} within {maxiter} cycles "
            f"(last residual {info.residuals[-1] if info.residuals else 'n/a'})",
            residuals=info.residuals)
    full[~system.index.dirichlet_mask] = x
    return SkeletonState(values=full, dirichlet_mask=bc.dirichlet_mask), info


@dataclass
class ElementNodalField:
    """Element-wise nodal polynomial field (e.g. mean intensity) on a mesh."""

    mesh: Mesh
    p: int
    values: np.ndarray  # (n_elems, p+1, p+1) indexed [e, ix, iy]

    def node_coords(self):
        """Physical LGL node coordinates, shapes (n_elems, p+1) per axis."""
        q = lgl_quadrature(self.p)
        mesh = self.mesh
        xs = np.empty((mesh.n_elems, self.p + 1))
        ys = np.empty((mesh.n_elems, self.p + 1))
        for e in range(mesh.n_elems):
            x0, y0 = mesh.elem_origin(e)
            xs[e] = x0 + 0.5 * mesh.hx * (q.nodes + 1.0)
            ys[e] = y0 + 0.5 * mesh.hy * (q.nodes + 1.0)
        return xs, ys

    def eval_grid(self, xs: np.ndarray, ys: np.ndarray, toward=None) -> np.ndarray:
        """Evaluate at the tensor grid xs x ys (points anywhere in the domain).

        The field is discontinuous across element boundaries; a point that
        falls on one is resolved toward the optional (cx, cy) hint (nudging
        only the element lookup, not the evaluation point), else toward +.
        """
        mesh, p = self.mesh, self.p
        q = lgl_quadrature(p)
        if toward is None:
            xl, yl = xs, ys
        else:
            cx, cy = toward
            xl = xs + 1e-9 * (cx - xs)
            yl = ys + 1e-9 * (cy - ys)
        ex = np.clip((xl / mesh.hx).astype(int), 0, mesh.nx - 1)
        ey = np.clip((yl / mesh.hy).astype(int), 0, mesh.ny - 1)
        xhat = 2.0 * (xs - ex * mesh.hx) / mesh.hx - 1.0
        yhat = 2.0 * (ys - ey * mesh.hy) / mesh.hy - 1.0
        phix = lagrange_basis_at(q, xhat)  # (len(xs), p+1)
        phiy = lagrange_basis_at(q, yhat)
        out = np.empty((xs.size, ys.size))
        for gx in np.unique(ex):
            mask_x = ex == gx
            for gy in np.unique(ey):
                mask_y = ey == gy
                coef = self.values[gy * mesh.nx + gx]
                out[np.ix_(mask_x, mask_y)] = phix[mask_x] @ coef @ phiy[mask_y].T
        return out


def boundary_fluxes(uhat: SkeletonState, index: SkeletonIndex):
    """(inflow, outflow) radiative flux through the domain boundary.

    Fluxes are the |s . n|-weighted face integrals of the skeleton values;
    with pure scattering (albedo 1) and zero forcing they balance to within
    the solver tolerance.
    """
    mesh, tm = index.mesh, index.tracemap
    influx = 0.0
    outflux = 0.0
    vert_in = np.isin(tm.inflow_face, (0, 1))
    vert_out = np.isin(tm.outflow_face, (0, 1))
    scale_in = np.where(vert_in, 0.5 * mesh.hy, 0.5 * mesh.hx)
    scale_out = np.where(vert_out, 0.5 * mesh.hy, 0.5 * mesh.hx)
    for e in range(mesh.n_elems):
        on_bdry_in = index.dirichlet_mask[index.elem_inflow[e]]
        faces = mesh.elem_faces[e]
        bdry_face = mesh.boundary_faces[faces]
        on_bdry_out = bdry_face[tm.outflow_face]
        vin = uhat.values[index.elem_inflow[e]]
        vout = uhat.values[index.elem_outflow[e]]
        influx += np.sum((-tm.inflow_flux * tm.inflow_wnode * scale_in
                          * vin)[on_bdry_in])
        outflux += np.sum((tm.outflow_flux * tm.outflow_wnode * scale_out
                           * vout)[on_bdry_out])
    return influx, outflux


def recover_solution(uhat: SkeletonState, ops_list, index: SkeletonIndex) -> np.ndarray:
    """Full interior solutions u = A_i2u uhat_in + f_u, shape (n_elems, n_vol)."""
    a = np.stack([ops.a_i2u for ops in ops_list])
    f = np.stack([ops.f_u for ops in ops_list])
    return np.einsum("eij,ej->ei", a, uhat.values[index.elem_inflow]) + f


def recover_mean_intensity(uhat: SkeletonState, ops_list, index: SkeletonIndex) -> ElementNodalField:
    """Mean intensity m = A_i2m uhat_in + (angular average of f_u) per element."""
    a = np.stack([ops.a_i2m for ops in ops_list])
    f = np.stack([ops.f_mean for ops in ops_list])
    vals = np.einsum("eij,ej->ei", a, uhat.values[index.elem_inflow]) + f
    p = index.p
    return ElementNodalField(mesh=index.mesh, p=p,
                             values=vals.reshape(index.mesh.n_elems, p + 1, p + 1))


def relative_l2_error(fld: ElementNodalField, ref: ElementNodalField) -> float:
    """|| fld - ref ||_L2 / || ref ||_L2 by LGL quadrature on the reference mesh.

    The (coarser) field is evaluated at the reference mesh's quadrature
    points through its polynomial representation; the meshes need not nest.
    """
    if abs(fld.mesh.lx - ref.mesh.lx) > 1e-12 or abs(fld.mesh.ly - ref.mesh.ly) > 1e-12:
        raise ValueError("fields live on different domains")
    q = lgl_quadrature(ref.p)
    w2 = np.outer(q.weights, q.weights)
    cell = 0.25 * ref.mesh.hx * ref.mesh.hy
    xs, ys = ref.node_coords()
    num = 0.0
    den = 0.0
    for e in range(ref.mesh.n_elems):
        x0, y0 = ref.mesh.elem_origin(e)
        center = (x0 + 0.5 * ref.mesh.hx, y0 + 0.5 * ref.mesh.hy)
        fe = fld.eval_grid(xs[e], ys[e], toward=center)
        re = ref.values[e]
        num += cell * np.sum(w2 * (fe - re) ** 2)
        den += cell * np.sum(w2 * re ** 2)
    if den == 0.0:
        raise ValueError("reference field has zero L2 norm")
    return float(np.sqrt(num / den))
