"""P1 finite elements for the anisotropic conductivity equation on a disk.

The discrete Dirichlet-to-Neumann map is the boundary Schur complement of
the stiffness matrix.  Both a conductivity and its push-forward are
assembled on the same mesh so that their DtN matrices can be compared
directly.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import NonPDTensor, SingularSystem
from .tensor_core import CARTESIAN, SymmetricTensorField, spherical_to_cartesian
from .transform import push_forward

# barycentric coordinates of the degree-2 interior rule
_QUAD3 = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
_QUAD1 = np.array([[1 / 3, 1 / 3, 1 / 3]])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh of a disk.

    Attributes
    ----------
    nodes : ndarray, shape (N, 2)
    triangles : ndarray, shape (T, 3)
        Counterclockwise node indices.
    boundary_nodes : ndarray, shape (B,)
        Boundary loop in counterclockwise order.
    h : float
        Longest edge.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    radius: float = 1.0
    h: float = field(init=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        tris = np.asarray(self.triangles, dtype=np.int64)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary_nodes", np.asarray(self.boundary_nodes, dtype=np.int64))
        p = nodes[tris]
        edges = np.concatenate([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        object.__setattr__(self, "h", float(np.sqrt((edges ** 2).sum(1)).max()))

    @property
    def mesh_id(self):
        return f"disk-N{len(self.nodes)}-T{len(self.triangles)}-B{len(self.boundary_nodes)}"

    @property
    def interior_nodes(self):
        mask = np.ones(len(self.nodes), dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    def signed_areas(self):
        p = self.nodes[self.triangles]
        a, b = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def validate(self):
        """Raise ``ValueError`` unless the mesh invariants hold."""
        if np.any(self.signed_areas() <= 0):
            raise ValueError("mesh has non-positive triangle areas")
        r = np.hypot(*self.nodes[self.boundary_nodes].T)
        if np.any(np.abs(r - self.radius) > 1e-12 * self.radius):
            raise ValueError("boundary nodes are off the circle")
        # boundary edges: edges used by exactly one triangle
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise ValueError("edge shared by more than two triangles")
        bedges = {tuple(x) for x in uniq[counts == 1]}
        loop = self.boundary_nodes
        ring = {tuple(sorted((loop[i], loop[(i + 1) % len(loop)]))) for i in range(len(loop))}
        if ring != bedges or len(set(loop.tolist())) != len(loop):
            raise ValueError("boundary loop does not match boundary edges")
        return True

    def to_text(self):
        """Plain-text export: header, coordinates, triangles, boundary loop."""
        buf = io.StringIO()
        buf.write(f"nodes {len(self.nodes)} triangles {len(self.triangles)} "
                  f"boundary {len(self.boundary_nodes)}\n")
        for x, y in self.nodes:
            buf.write(f"{float(x)!r} {float(y)!r}\n")
        for a, b, c in self.triangles:
            buf.write(f"{a} {b} {c}\n")
        for i in self.boundary_nodes:
            buf.write(f"{i}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text, radius=None):
        lines = text.strip().splitlines()
        head = lines[0].split()
        if head[0::2] != ["nodes", "triangles", "boundary"]:
            raise ValueError("bad mesh header")
        n, t, b = (int(v) for v in head[1::2])
        nodes = np.array([[float(v) for v in ln.split()] for ln in lines[1:1 + n]])
        tris = np.array([[int(v) for v in ln.split()] for ln in lines[1 + n:1 + n + t]])
        bnd = np.array([int(ln) for ln in lines[1 + n + t:1 + n + t + b]])
        if radius is None:
            radius = float(np.hypot(*nodes[bnd].T).mean())
        return cls(nodes, tris, bnd, radius)


def build_disk_mesh(n_rings, radius=1.0):
    """Concentric-ring triangulation; ring ``k`` carries ``6k`` nodes.

    Neighbouring rings are stitched by merging their nodes in angular order,
    which keeps every triangle counterclockwise and ``h ~ radius/n_rings``.
    """
    n_rings = int(n_rings)
    if n_rings < 2:
        raise ValueError("n_rings must be at least 2")
    nodes = [(0.0, 0.0)]
    rings = [np.array([0])]
    angles = [np.array([0.0])]
    for k in range(1, n_rings + 1):
        m = 6 * k
        th = 2 * math.pi * np.arange(m) / m
        rad = radius * k / n_rings
        start = len(nodes)
        pts = np.column_stack([rad * np.cos(th), rad * np.sin(th)])
        if k == n_rings:
            # exact boundary radius
            pts /= np.hypot(*pts.T)[:, None] / radius
        nodes.extend(map(tuple, pts))
        rings.append(np.arange(start, start + m))
        angles.append(th)
    tris = []
    for k in range(1, n_rings + 1):
        inner, outer = rings[k - 1], rings[k]
        ti, to = angles[k - 1], angles[k]
        if len(inner) == 1:
            for j in range(len(outer)):
                tris.append((inner[0], outer[j], outer[(j + 1) % len(outer)]))
            continue
        i = j = 0
        ni, no = len(inner), len(outer)
        while i < ni or j < no:
            # advance whichever ring has the next node at the smaller angle
            ai = ti[i + 1] if i + 1 < ni else 2 * math.pi
            ao = to[j + 1] if j + 1 < no else 2 * math.pi
            if j < no and (i >= ni or ao <= ai):
                tris.append((inner[i % ni], outer[j], outer[(j + 1) % no]))
                j += 1
            else:
                tris.append((inner[i % ni], outer[j % no], inner[(i + 1) % ni]))
                i += 1
    return Mesh(np.array(nodes), np.array(tris), rings[-1], float(radius))


# -- assembly ---------------------------------------------------------------------

def _gradients(mesh):
    p = mesh.nodes[mesh.triangles]
    area = mesh.signed_areas()
    # grad of barycentric lambda_i = rot90(opposite edge) / (2 area)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    g = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2 * area[:, None, None])
    return g, area


def element_sigma(sigma: SymmetricTensorField, mesh: Mesh, quadrature=3):
    """Quadrature average of ``sigma`` over each triangle, shape (T, 2, 2)."""
    if sigma.dim != 2:
        raise ValueError("fem2d needs a 2D conductivity")
    if sigma.coords != CARTESIAN:
        sigma = spherical_to_cartesian(sigma)
    bary = {3: _QUAD3, 1: _QUAD1}[quadrature]
    p = mesh.nodes[mesh.triangles]
    q = np.einsum("qk,tkd->tqd", bary, p).reshape(-1, 2)
    s = np.asarray(sigma(q), dtype=float).reshape(len(p), len(bary), 2, 2)
    ev = np.linalg.eigvalsh(0.5 * (s + np.swapaxes(s, -1, -2)))
    if np.any(ev[..., 0] < 0):
        bad = np.unravel_index(np.argmin(ev[..., 0]), ev.shape[:2])
        raise NonPDTensor(f"eigenvalue {ev[bad][0]:.3e} < 0 at quadrature point "
                          f"{q[bad[0] * len(bary) + bad[1]]}")
    return s.mean(axis=1)


def assemble(sigma: SymmetricTensorField, mesh: Mesh, quadrature=3):
    """P1 stiffness matrix of ``div(sigma grad u)`` as CSR.

    Gradients are constant per element, so quadrature only enters through
    the element average of ``sigma``.
    """
    g, area = _gradients(mesh)
    s = element_sigma(sigma, mesh, quadrature)
    ke = area[:, None, None] * np.einsum("tid,tde,tje->tij", g, s, g)
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = len(mesh.nodes)
    K = sps.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return 0.5 * (K + K.T)


def boundary_mass(mesh: Mesh):
    """P1 mass matrix of the boundary polygon, dense (B, B)."""
    b = mesh.boundary_nodes
    nb = len(b)
    pts = mesh.nodes[b]
    L = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    M = np.zeros((nb, nb))
    i = np.arange(nb)
    j = (i + 1) % nb
    np.add.at(M, (i, i), L / 3)
    np.add.at(M, (j, j), L / 3)
    np.add.at(M, (i, j), L / 6)
    np.add.at(M, (j, i), L / 6)
    return M


def _factor(K, mesh):
    ii = mesh.interior_nodes
    Kii = K[ii][:, ii].tocsc()
    try:
        lu = spla.splu(Kii)
    except RuntimeError as exc:
        raise SingularSystem(f"interior stiffness is singular: {exc}") from exc
    if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
        raise SingularSystem("interior stiffness is singular")
    return ii, lu


def solve_dirichlet(K, mesh: Mesh, f):
    """Nodal solution with boundary values ``f`` on ``mesh.boundary_nodes``."""
    f = np.asarray(f, dtype=float)
    ii, lu = _factor(K, mesh)
    b = mesh.boundary_nodes
    u = np.zeros(len(mesh.nodes))
    u[b] = f
    u[ii] = lu.solve(-(K[ii][:, b] @ f))
    return u


@dataclass(frozen=True)
class DiscreteDtN:
    matrix: np.ndarray
    mass_boundary: np.ndarray
    mesh_id: str

    def rayleigh(self, f):
        f = np.asarray(f, dtype=float)
        return float(f @ self.matrix @ f / (f @ self.mass_boundary @ f))

    def check(self, tol=1e-10):
        A = self.matrix
        scale = np.abs(A).max()
        if np.abs(A - A.T).max() > tol * scale:
            raise ValueError("DtN matrix is not symmetric")
        if np.abs(A.sum(axis=1)).max() > tol * scale:
            raise ValueError("DtN matrix does not annihilate constants")
        ev = np.linalg.eigvalsh(0.5 * (A + A.T))
        if ev[0] < -tol * scale:
            raise ValueError("DtN matrix is not positive semi-definite")
        return True

    def to_csv(self):
        return "\n".join(",".join(repr(float(v)) for v in row) for row in self.matrix) + "\n"


def discrete_dtn(K, mesh: Mesh):
    """Boundary Schur complement ``K_bb - K_bi K_ii^{-1} K_ib``."""
    ii, lu = _factor(K, mesh)
    b = mesh.boundary_nodes
    Kib = K[ii][:, b].toarray()
    S = K[b][:, b].toarray() - Kib.T @ lu.solve(Kib)
    return DiscreteDtN(0.5 * (S + S.T), boundary_mass(mesh), mesh.mesh_id)


def energy(K, u):
    return float(u @ (K @ u))


# -- invariance -------------------------------------------------------------------

def _inv_sqrt(M):
    w, V = np.linalg.eigh(M)
    return (V / np.sqrt(w)) @ V.T


def dtn_difference(a: DiscreteDtN, b: DiscreteDtN, modes=None):
    """Relative mass-weighted Frobenius difference of two DtN matrices.

    Both matrices are mapped to ``M^{-1/2} L M^{-1/2}`` (the operator in an
    L2-orthonormal boundary basis).  With ``modes`` given, both are first
    Galerkin-projected onto boundary Fourier modes ``cos k th, sin k th``
    for ``k = 1..modes``.
    """
    M = a.mass_boundary
    if modes is None:
        W = _inv_sqrt(M)
        A, B = W @ a.matrix @ W, W @ b.matrix @ W
    else:
        Q = _fourier_basis(M, a.matrix.shape[0], modes)
        A, B = Q.T @ a.matrix @ Q, Q.T @ b.matrix @ Q
    return float(np.linalg.norm(A - B) / np.linalg.norm(A))


def _fourier_basis(M, nb, modes):
    th = 2 * math.pi * np.arange(nb) / nb
    cols = []
    for k in range(1, modes + 1):
        cols += [np.cos(k * th), np.sin(k * th)]
    F = np.column_stack(cols)
    # M-orthonormalize
    L = np.linalg.cholesky(F.T @ M @ F)
    return F @ np.linalg.inv(L).T


@dataclass(frozen=True)
class InvarianceReport:
    h: tuple
    errors: tuple
    order: float
    ratios: tuple
    map_name: str
    modes: object = None

    def rows(self):
        return [{"h": h, "error": e} for h, e in zip(self.h, self.errors)]


def fitted_order(h, err):
    h, err = np.log(np.asarray(h)), np.log(np.asarray(err))
    return float(np.polyfit(h, err, 1)[0])


def invariance_experiment(sigma: SymmetricTensorField, F, meshes, modes=None, quadrature=3):
    """Compare the DtN matrices of ``sigma`` and ``F_* sigma`` mesh by mesh.

    ``meshes`` is a list of meshes or of ring counts.
    """
    pushed = push_forward(F, sigma)
    hs, errs = [], []
    for m in meshes:
        mesh = m if isinstance(m, Mesh) else build_disk_mesh(m)
        a = discrete_dtn(assemble(sigma, mesh, quadrature), mesh)
        b = discrete_dtn(assemble(pushed, mesh, quadrature), mesh)
        hs.append(mesh.h)
        errs.append(dtn_difference(a, b, modes))
    ratios = tuple(errs[i + 1] / errs[i] if errs[i] > 0 else 0.0 for i in range(len(errs) - 1))
    order = fitted_order(hs, errs) if len(hs) > 1 and min(errs) > 0 else math.inf
    return InvarianceReport(tuple(hs), tuple(errs), order, ratios, repr(F), modes)


def disk_rayleigh_quotients(n_rings_list, ks=(1, 2, 3), radius=1.0):
    """Rayleigh quotients of ``cos k th`` for ``sigma = I``; rows per mesh."""
    out = []
    ident = SymmetricTensorField.identity(2)
    for n in n_rings_list:
        mesh = build_disk_mesh(n, radius)
        D = discrete_dtn(assemble(ident, mesh), mesh)
        th = np.arctan2(*mesh.nodes[mesh.boundary_nodes][:, ::-1].T)
        out.append((mesh.h, [D.rayleigh(np.cos(k * th)) for k in ks]))
    return out


__all__ = [
    "Mesh", "build_disk_mesh", "assemble", "element_sigma", "boundary_mass", "solve_dirichlet",
    "DiscreteDtN", "discrete_dtn", "energy", "dtn_difference", "InvarianceReport",
    "invariance_experiment", "fitted_order", "disk_rayleigh_quotients",
]
