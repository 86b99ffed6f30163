"""Rectangular spatial meshes, face topology, and hybrid-trace DOF numbering.

Orderings fixed here (and relied on everywhere else):

* elements: e = iy * nx + ix (x fastest);
* spatial nodes inside an element: node = ix * (p+1) + iy;
* volume DOFs: node * N_a + a (angular index fastest);
* element faces: (left, right, bottom, top);
* face nodes: ascending coordinate along the face (y on vertical faces,
  x on horizontal faces);
* hybrid DOFs on a face: node * N_a + a, offset by face_id * (p+1) * N_a.

Both elements sharing an interior face enumerate its nodes identically, so a
trace DOF has one global index regardless of the sampling side.
"""

from dataclasses import dataclass, field

import numpy as np

from .angular import AngularGrid
from .basis import lgl_quadrature

FACE_LEFT, FACE_RIGHT, FACE_BOTTOM, FACE_TOP = 0, 1, 2, 3
ELEMENT_FACE_NORMALS = ((-1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0))
FACE_NAMES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Mesh:
    """Uniform rectangular partition of [0, Lx] x [0, Ly]."""

    lx: float
    ly: float
    nx: int
    ny: int
    # face arrays indexed by face id: vertical faces first (id = iy*(nx+1)+ix_edge),
    # then horizontal (id = n_vertical + iy_edge*nx + ix)
    face_minus: np.ndarray = field(repr=False)  # element on the negative side, -1 at boundary
    face_plus: np.ndarray = field(repr=False)
    face_axis: np.ndarray = field(repr=False)  # 0: normal +-ex, 1: normal +-ey
    elem_faces: np.ndarray = field(repr=False)  # (n_elems, 4) in (L, R, B, T) order

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def n_elems(self) -> int:
        return self.nx * self.ny

    @property
    def n_faces(self) -> int:
        return self.face_axis.size

    @property
    def boundary_faces(self) -> np.ndarray:
        return (self.face_minus < 0) | (self.face_plus < 0)

    def elem_origin(self, e: int) -> tuple[float, float]:
        iy, ix = divmod(e, self.nx)
        return ix * self.hx, iy * self.hy

    def face_span(self, f: int):
        """(fixed coordinate, span start) of a face in physical coordinates."""
        n_vert = self.ny * (self.nx + 1)
        if f < n_vert:
            iy, ix_edge = divmod(f, self.nx + 1)
            return ix_edge * self.hx, iy * self.hy
        iy_edge, ix = divmod(f - n_vert, self.nx)
        return iy_edge * self.hy, ix * self.hx

    def outward_normal(self, f: int, e: int):
        """Outward normal of face f as seen from its incident element e."""
        sign = 1.0 if self.face_minus[f] == e else -1.0
        return (sign, 0.0) if self.face_axis[f] == 0 else (0.0, sign)


def build_mesh(lx: float, ly: float, nx: int, ny: int) -> Mesh:
    if lx <= 0 or ly <= 0 or nx <= 0 or ny <= 0:
        raise ValueError(f"mesh extents/counts must be positive, got {(lx, ly, nx, ny)}")
    n_vert = ny * (nx + 1)
    n_horz = nx * (ny + 1)
    n_faces = n_vert + n_horz
    face_minus = np.full(n_faces, -1, dtype=np.int64)
    face_plus = np.full(n_faces, -1, dtype=np.int64)
    face_axis = np.zeros(n_faces, dtype=np.int64)
    face_axis[n_vert:] = 1

    def vf(ix_edge, iy):
        return iy * (nx + 1) + ix_edge

    def hf(ix, iy_edge):
        return n_vert + iy_edge * nx + ix

    elem_faces = np.zeros((nx * ny, 4), dtype=np.int64)
    for iy in range(ny):
        for ix in range(nx):
            e = iy * nx + ix
            l, r, b, t = vf(ix, iy), vf(ix + 1, iy), hf(ix, iy), hf(ix, iy + 1)
            elem_faces[e] = (l, r, b, t)
            face_plus[l] = e   # element sits on the +x side of its left face
            face_minus[r] = e
            face_plus[b] = e
            face_minus[t] = e
    return Mesh(lx=lx, ly=ly, nx=nx, ny=ny, face_minus=face_minus,
                face_plus=face_plus, face_axis=face_axis, elem_faces=elem_faces)


def refinement_schedule(case: str, level: int) -> tuple[int, int]:
    """Mesh partition (nx, ny) of a named test case at a refinement level."""
    if level < 0:
        raise ValueError(f"refinement level must be >= 0, got {level}")
    if case in ("idealized", "idealized-1", "idealized-2"):
        return 3 * (level + 2), 2 * (level + 2)
    if case == "i3rc":
        return 13 * (level + 2), level + 2
    raise ValueError(f"unknown test-case tag {case!r}")


class ElementTraceMap:
    """Canonical inflow/outflow trace-slot enumeration of a single element.

    Slots are enumerated face-major (L, R, B, T), then face node, then
    angular element; the inflow and outflow slot lists keep that relative
    order. For each slot the map records its local face, face node, angular
    element, the matching volume DOF row, the 1D LGL weight of the face
    node, and the signed angular flux integral of s . n over the angular
    element (negative on inflow slots). This enumeration fixes the column
    order of the inflow-to-* operators and the row order of the
    inflow-to-outflow operator.
    """

    def __init__(self, p: int, grid: AngularGrid):
        self.p = p
        self.grid = grid
        n1 = p + 1
        na = grid.n_elems
        q = lgl_quadrature(p)
        # volume node of face node j on each local face
        face_vol_nodes = (
            np.arange(n1),                      # left:   (0, j)
            p * n1 + np.arange(n1),             # right:  (p, j)
            np.arange(n1) * n1,                 # bottom: (j, 0)
            np.arange(n1) * n1 + p,             # top:    (j, p)
        )
        rec = {"face": [], "node": [], "ang": [], "vol": [], "wnode": [], "flux": []}
        inflow, outflow = [], []
        for lf, normal in enumerate(ELEMENT_FACE_NORMALS):
            flux = grid.normal_flux_int(normal)
            out = grid.outflow_mask(normal)
            for j in range(n1):
                for a in range(na):
                    (outflow if out[a] else inflow).append(len(rec["face"]))
                    rec["face"].append(lf)
                    rec["node"].append(j)
                    rec["ang"].append(a)
                    rec["vol"].append(face_vol_nodes[lf][j] * na + a)
                    rec["wnode"].append(q.weights[j])
                    rec["flux"].append(flux[a])
        slots = {k: np.asarray(v) for k, v in rec.items()}
        self._select(slots, np.asarray(inflow), "in")
        self._select(slots, np.asarray(outflow), "out")
        self.n_in = len(inflow)
        self.n_out = len(outflow)

    def _select(self, slots, idx, tag):
        for k in ("face", "node", "ang", "vol"):
            setattr(self, f"{tag}flow_{k}", slots[k][idx])
        setattr(self, f"{tag}flow_wnode", slots["wnode"][idx])
        setattr(self, f"{tag}flow_flux", slots["flux"][idx])


@dataclass(frozen=True)
class SkeletonIndex:
    """Global numbering of the hybrid trace DOFs over the mesh skeleton."""

    mesh: Mesh
    grid: AngularGrid
    p: int
    tracemap: ElementTraceMap = field(repr=False)
    elem_inflow: np.ndarray = field(repr=False)   # (n_elems, n_in) global DOF ids
    elem_outflow: np.ndarray = field(repr=False)  # (n_elems, n_out)
    dirichlet_mask: np.ndarray = field(repr=False)
    free_index: np.ndarray = field(repr=False)    # position among free DOFs, -1 if fixed

    @property
    def n_dofs(self) -> int:
        return self.dirichlet_mask.size

    @property
    def n_free(self) -> int:
        return int(np.sum(~self.dirichlet_mask))

    def boundary_inflow_records(self):
        """Per Dirichlet DOF: (dof, x, y, theta_mid, outward normal).

        Used to sample boundary radiance; with p_a = 0 the projection of g
        is nodal interpolation at the face LGL nodes and midpoint sampling
        in angle.
        """
        mesh, grid, p = self.mesh, self.grid, self.p
        n1, na = p + 1, grid.n_elems
        q = lgl_quadrature(p)
        mids = grid.midpoints
        recs = []
        for f in np.nonzero(mesh.boundary_faces)[0]:
            e = mesh.face_minus[f] if mesh.face_minus[f] >= 0 else mesh.face_plus[f]
            normal = mesh.outward_normal(f, int(e))
            inflow_a = np.nonzero(~grid.outflow_mask(normal))[0]
            fixed_coord, span_start = mesh.face_span(f)
            h_span = mesh.hy if mesh.face_axis[f] == 0 else mesh.hx
            coords = span_start + 0.5 * h_span * (q.nodes + 1.0)
            for j in range(n1):
                x, y = (fixed_coord, coords[j]) if mesh.face_axis[f] == 0 else (coords[j], fixed_coord)
                for a in inflow_a:
                    dof = f * n1 * na + j * na + a
                    recs.append((dof, x, y, mids[a], normal))
        return recs


def skeleton_numbering(mesh: Mesh, grid: AngularGrid, p: int) -> SkeletonIndex:
    """Dense contiguous hybrid numbering plus per-element gather lists."""
    tracemap = ElementTraceMap(p, grid)
    n1, na = p + 1, grid.n_elems
    n_per_face = n1 * na
    n_dofs = mesh.n_faces * n_per_face

    def global_ids(faces, nodes, angs):
        return mesh.elem_faces[:, faces] * n_per_face + nodes[None, :] * na + angs[None, :]

    elem_inflow = global_ids(tracemap.inflow_face, tracemap.inflow_node, tracemap.inflow_ang)
    elem_outflow = global_ids(tracemap.outflow_face, tracemap.outflow_node, tracemap.outflow_ang)

    dirichlet = np.zeros(n_dofs, dtype=bool)
    for f in np.nonzero(mesh.boundary_faces)[0]:
        e = mesh.face_minus[f] if mesh.face_minus[f] >= 0 else mesh.face_plus[f]
        normal = mesh.outward_normal(f, int(e))
        inflow_a = ~grid.outflow_mask(normal)
        base = f * n_per_face
        for j in range(n1):
            dirichlet[base + j * na : base + (j + 1) * na] = inflow_a

    free_index = np.full(n_dofs, -1, dtype=np.int64)
    free_index[~dirichlet] = np.arange(int(np.sum(~dirichlet)))
    return SkeletonIndex(mesh=mesh, grid=grid, p=p, tracemap=tracemap,
                         elem_inflow=elem_inflow, elem_outflow=elem_outflow,
                         dirichlet_mask=dirichlet, free_index=free_index)
