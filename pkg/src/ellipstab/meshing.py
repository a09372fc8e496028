"""Conforming triangulations of sector and subgraph domains.

Sector meshes are structured polar grids with optional radial grading
toward the corner and exact insertion of interface radii, so quadrature
never straddles a coefficient discontinuity.  Curved arcs are approximated
by chords; uniform refinement projects new arc midpoints back to their
circle, keeping the O(h^2) geometric error and the interface alignment.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import GraphDomain, SectorDomain


@dataclass(frozen=True)
class GenerationMeta:
    domain: object
    grading: float = 1.0
    level: int = 0
    aligned_radii: tuple = ()
    min_angle_deg: float = 0.0
    # ("polar", radii tuple, n_angular) on structured sector meshes; enables
    # O(1) point location.  Cleared by refinement, which breaks the structure.
    structure: tuple = ()


class TriMesh:
    """Triangulation with per-vertex Dirichlet flags.

    Immutable after construction; derived structures (edges, neighbors,
    point locator) are built lazily and cached.
    """

    def __init__(self, vertices, triangles, boundary_flags, meta=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.boundary_flags = np.asarray(boundary_flags, dtype=bool)
        if meta is None:
            meta = GenerationMeta(domain=None)
        if meta.min_angle_deg == 0.0:
            meta = replace(meta, min_angle_deg=self._compute_min_angle())
        self.meta = meta
        self._edge_cache = None
        self._locator = None

    # -- basic quantities ------------------------------------------------

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    def corners(self):
        return self.vertices[self.triangles]

    def signed_areas(self):
        p = self.corners()
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def areas(self):
        return np.abs(self.signed_areas())

    def total_area(self):
        return float(np.sum(self.areas()))

    def p1_gradients(self):
        """Gradients of the three nodal basis functions, shape (M, 3, 2)."""
        p = self.corners()
        det = 2.0 * self.signed_areas()
        g = np.empty((self.num_triangles, 3, 2))
        for i in range(3):
            a = p[:, (i + 1) % 3]
            b = p[:, (i + 2) % 3]
            g[:, i, 0] = (a[:, 1] - b[:, 1]) / det
            g[:, i, 1] = (b[:, 0] - a[:, 0]) / det
        return g

    def _compute_min_angle(self):
        p = self.corners()
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.sum(u * v, axis=1) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
            )
            angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return float(np.degrees(np.min(angles)))

    @property
    def min_angle_deg(self):
        return self.meta.min_angle_deg

    # -- connectivity ----------------------------------------------------

    def _edges(self):
        if self._edge_cache is None:
            tri = self.triangles
            # edge e of a triangle is opposite local vertex e
            raw = np.concatenate(
                [tri[:, [1, 2]], tri[:, [2, 0]], tri[:, [0, 1]]], axis=0
            )
            key = np.sort(raw, axis=1)
            uniq, inverse, counts = np.unique(
                key, axis=0, return_inverse=True, return_counts=True
            )
            owner_tri = np.tile(np.arange(self.num_triangles), 3)
            owner_loc = np.repeat(np.arange(3), self.num_triangles)
            neighbors = -np.ones((self.num_triangles, 3), dtype=np.int64)
            edge_tris = [[] for _ in range(uniq.shape[0])]
            for t, loc, e in zip(owner_tri, owner_loc, inverse):
                edge_tris[e].append((t, loc))
            for e, owners in enumerate(edge_tris):
                if len(owners) == 2:
                    (t1, l1), (t2, l2) = owners
                    neighbors[t1, l1] = t2
                    neighbors[t2, l2] = t1
            self._edge_cache = (uniq, counts, neighbors)
        return self._edge_cache

    def edges(self):
        return self._edges()[0]

    def edge_counts(self):
        return self._edges()[1]

    def neighbors(self):
        """Neighbor triangle across each local edge, -1 on the boundary."""
        return self._edges()[2]

    def boundary_edges(self):
        uniq, counts, _ = self._edges()
        return uniq[counts == 1]

    # -- validation and export --------------------------------------------

    def validate(self, tol=1e-10):
        """Raise ValueError on any violated mesh invariant."""
        if np.any(self.signed_areas() <= 0.0):
            bad = int(np.argmax(self.signed_areas() <= 0.0))
            raise ValueError(f"triangle {bad} has non-positive area")
        counts = self.edge_counts()
        if np.any((counts != 1) & (counts != 2)):
            raise ValueError("mesh is not edge-manifold")
        used = np.zeros(self.num_vertices, dtype=bool)
        used[self.triangles.ravel()] = True
        if not np.all(used):
            raise ValueError("mesh has unused (hanging) vertices")
        dom = self.meta.domain
        if dom is not None:
            on = dom.on_boundary(self.vertices, tol=tol)
            if np.any(on & ~self.boundary_flags):
                raise ValueError("boundary vertex not flagged Dirichlet")
            if np.any(self.boundary_flags & ~on):
                raise ValueError("interior vertex flagged Dirichlet")
        bedges = self.boundary_edges()
        if not np.all(self.boundary_flags[bedges.ravel()]):
            raise ValueError("boundary edge with unflagged endpoint")
        return True

    def export_text(self):
        """ASCII export: one `v x y flag` line per vertex, then `t i j k` lines."""
        lines = []
        for (x, y), flag in zip(self.vertices, self.boundary_flags):
            lines.append(f"v {x:.17g} {y:.17g} {int(flag)}")
        for i, j, k in self.triangles:
            lines.append(f"t {i} {j} {k}")
        return "\n".join(lines) + "\n"


def _sector_vertices(domain, radii, n_angular):
    beta = domain.beta
    thetas = np.linspace(0.0, beta, n_angular + 1)
    has_corner = radii[0] == 0.0
    ring_radii = radii[1:] if has_corner else radii
    verts = []
    if has_corner:
        verts.append((0.0, 0.0))
    for r in ring_radii:
        for t in thetas:
            verts.append((r * np.cos(t), r * np.sin(t)))
    return np.asarray(verts), has_corner, ring_radii.size, thetas.size


def mesh_sector_from_radii(domain, radii, n_angular, grading=1.0, aligned_radii=()):
    """Structured sector mesh with an explicit radial node list.

    ``aligned_radii`` records which node circles are coefficient interfaces;
    only those (and the boundary arcs) are projected back onto their circle
    during refinement.
    """
    radii = np.asarray(sorted(radii), dtype=float)
    if abs(radii[0] - domain.r_inner) > 1e-14 or abs(radii[-1] - domain.r_outer) > 1e-14:
        raise ValueError("radii must span [r_inner, r_outer]")
    if n_angular < 1:
        raise ValueError("need at least one angular interval")
    vertices, has_corner, n_rings, n_theta = _sector_vertices(domain, radii, n_angular)

    def vid(ring, j):
        return (1 if has_corner else 0) + ring * n_theta + j

    tris = []
    if has_corner:
        for j in range(n_angular):
            tris.append((0, vid(0, j), vid(0, j + 1)))
    for i in range(n_rings - 1):
        for j in range(n_angular):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    triangles = np.asarray(tris, dtype=np.int64)

    flags = np.zeros(vertices.shape[0], dtype=bool)
    if has_corner:
        flags[0] = True
    for i in range(n_rings):
        flags[vid(i, 0)] = True
        flags[vid(i, n_angular)] = True
    for j in range(n_theta):
        flags[vid(n_rings - 1, j)] = True
    if not has_corner:
        for j in range(n_theta):
            flags[vid(0, j)] = True

    interior = tuple(float(s) for s in sorted(set(aligned_radii))
                     if domain.r_inner + 1e-14 < s < domain.r_outer - 1e-14)
    meta = GenerationMeta(domain=domain, grading=grading, level=0,
                          aligned_radii=interior,
                          structure=("polar", tuple(float(r) for r in radii), n_angular))
    return TriMesh(vertices, triangles, flags, meta)


def graded_radii(domain, n_radial, grading=1.0, aligned_radii=()):
    """Radial nodes r_inner + (r_outer - r_inner) * (i/n)^mu, plus aligned radii."""
    if n_radial < 2:
        raise ValueError("need at least 2 radial intervals")
    if grading < 1.0:
        raise ValueError("grading exponent must be >= 1")
    t = (np.arange(n_radial + 1) / n_radial) ** grading
    radii = domain.r_inner + (domain.r_outer - domain.r_inner) * t
    aligned = np.asarray(sorted(set(float(s) for s in aligned_radii)), dtype=float)
    for s in aligned:
        if not domain.r_inner < s < domain.r_outer:
            raise ValueError(f"aligned radius {s} outside ({domain.r_inner}, {domain.r_outer})")
    if aligned.size:
        # drop generated nodes indistinguishable from an aligned radius so the
        # exact aligned value survives
        near = np.min(np.abs(radii[:, None] - aligned[None, :]), axis=1)
        radii = radii[near > 1e-12]
        radii = np.unique(np.concatenate([radii, aligned]))
    return radii


def mesh_sector(domain, n_radial, n_angular, grading=1.0, aligned_radii=()):
    """Structured polar mesh of a sector with grading and aligned interface circles.

    Radial nodes follow the power law (i/n)^grading, shifted when the
    domain has an inner radius; every radius in ``aligned_radii`` is
    inserted as an exact node circle.  All four boundary pieces are
    flagged Dirichlet.
    """
    if n_angular < 2:
        raise ValueError("need at least 2 angular intervals")
    radii = graded_radii(domain, n_radial, grading, aligned_radii)
    return mesh_sector_from_radii(domain, radii, n_angular, grading=grading,
                                  aligned_radii=aligned_radii)


def mesh_graph_domain(domain, n_x, n_y):
    """Tensor mesh of a subgraph domain; the top row follows the height function."""
    if n_x < 2 or n_y < 2:
        raise ValueError("need at least 2 intervals per direction")
    xs = np.linspace(domain.x_lo, domain.x_hi, n_x + 1)
    hs = domain.height(xs)
    verts = np.empty(((n_x + 1) * (n_y + 1), 2))
    for i, (x, h) in enumerate(zip(xs, hs)):
        ys = domain.floor + (h - domain.floor) * np.arange(n_y + 1) / n_y
        verts[i * (n_y + 1):(i + 1) * (n_y + 1), 0] = x
        verts[i * (n_y + 1):(i + 1) * (n_y + 1), 1] = ys

    def vid(i, j):
        return i * (n_y + 1) + j

    tris = []
    for i in range(n_x):
        for j in range(n_y):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    flags = np.zeros(verts.shape[0], dtype=bool)
    for j in range(n_y + 1):
        flags[vid(0, j)] = True
        flags[vid(n_x, j)] = True
    for i in range(n_x + 1):
        flags[vid(i, 0)] = True
        flags[vid(i, n_y)] = True
    meta = GenerationMeta(domain=domain)
    return TriMesh(verts, np.asarray(tris, dtype=np.int64), flags, meta)


def _project_new_vertex(mid, va, vb, mesh):
    """Snap a boundary-edge midpoint back onto the curved boundary piece."""
    dom = mesh.meta.domain
    tol = 1e-10
    if isinstance(dom, SectorDomain):
        circles = [dom.r_outer] + list(mesh.meta.aligned_radii)
        if dom.r_inner > 0.0:
            circles.append(dom.r_inner)
        ra, rb = np.hypot(*va), np.hypot(*vb)
        for rc in circles:
            if abs(ra - rc) <= tol and abs(rb - rc) <= tol:
                rm = np.hypot(*mid)
                if rm > 0.0:
                    return mid * (rc / rm)
        return mid
    if isinstance(dom, GraphDomain):
        if (abs(va[1] - dom.height(va[0])) <= tol
                and abs(vb[1] - dom.height(vb[0])) <= tol):
            return np.array([mid[0], float(dom.height(mid[0]))])
        return mid
    return mid


def refine_uniform(mesh):
    """Split every triangle into four via edge midpoints.

    Midpoints of edges lying on a circular arc (outer, inner or aligned
    interface circle) or on the top graph boundary are projected back onto
    the curve; interior midpoints are untouched so nested refinement stays
    nested on polygonal domains.  A new midpoint is flagged Dirichlet
    exactly when its parent edge is a boundary edge.

    The projection assumes the angular resolution is fine enough that the
    chord sagitta stays below the local radial spacing; otherwise children
    can invert, which ``validate`` reports.
    """
    edges = mesh.edges()
    counts = mesh.edge_counts()
    nv = mesh.num_vertices
    mid_index = {}
    new_verts = [mesh.vertices]
    new_flags = [mesh.boundary_flags]
    mids = []
    flags = []
    for e, (a, b) in enumerate(edges):
        va, vb = mesh.vertices[a], mesh.vertices[b]
        # projection is a no-op unless both endpoints share a circle or the
        # top graph; interior aligned interface circles are projected too
        mid = _project_new_vertex(0.5 * (va + vb), va, vb, mesh)
        boundary_edge = counts[e] == 1
        mid_index[(int(min(a, b)), int(max(a, b)))] = nv + len(mids)
        mids.append(mid)
        flags.append(bool(boundary_edge))
    new_verts.append(np.asarray(mids))
    new_flags.append(np.asarray(flags, dtype=bool))
    vertices = np.concatenate(new_verts, axis=0)
    bflags = np.concatenate(new_flags)

    def mid_of(a, b):
        return mid_index[(int(min(a, b)), int(max(a, b)))]

    tris = []
    for v0, v1, v2 in mesh.triangles:
        m01 = mid_of(v0, v1)
        m12 = mid_of(v1, v2)
        m20 = mid_of(v2, v0)
        tris.extend([(v0, m01, m20), (v1, m12, m01), (v2, m20, m12), (m01, m12, m20)])
    meta = replace(mesh.meta, level=mesh.meta.level + 1, min_angle_deg=0.0,
                   structure=())
    return TriMesh(vertices, np.asarray(tris, dtype=np.int64), bflags, meta)
