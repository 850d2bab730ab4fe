"""Conforming triangulations with boundary labels and newest-vertex bisection.

Conventions
-----------
* ``triangles[t] = (v0, v1, v2)`` is counterclockwise and ``v0`` is the
  newest vertex, i.e. the refinement edge of ``t`` is ``(v1, v2)``.
* Local edge ``j`` of a triangle is the edge opposite local vertex ``j``.
* Every side ``s`` is stored as ``sides[s] = (a, b)`` in the orientation in
  which its first adjacent triangle ``T+`` traverses it counterclockwise; the
  fixed side normal ``side_normals[s]`` is the outward normal of ``T+``.
  ``side_elements[s] = (T+, T-)`` with ``T- = -1`` on the boundary.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

INTERIOR, DIRICHLET, NEUMANN = 0, 1, 2
_LABEL_CODES = {"D": DIRICHLET, "N": NEUMANN}
_LABEL_NAMES = {DIRICHLET: "D", NEUMANN: "N"}

_LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class MeshError(ValueError):
    """Malformed, non-conforming or inconsistently labelled mesh."""


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


class Triangulation:
    """Immutable simplicial triangulation of a polygon.

    Parameters
    ----------
    vertices : array (NV, 2)
    triangles : array (NT, 3)
        Counterclockwise vertex triples, vertex 0 opposite the refinement edge.
    boundary : array (NB, 2)
        Boundary sides as vertex pairs (any orientation).
    labels : array (NB,)
        ``DIRICHLET`` or ``NEUMANN`` per boundary side (``"D"``/``"N"`` accepted).
    generation : array (NT,), optional
        Number of bisections since the initial mesh.
    """

    def __init__(self, vertices, triangles, boundary, labels, generation=None):
        vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        boundary = np.array(boundary, dtype=np.int64).reshape(-1, 2)
        labels = np.array([_LABEL_CODES.get(l, l) if isinstance(l, str) else l for l in labels], dtype=np.int64)
        if generation is None:
            generation = np.zeros(len(triangles), dtype=np.int64)
        generation = np.array(generation, dtype=np.int64)

        if len(triangles) == 0:
            raise MeshError("mesh has no triangles")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise MeshError("triangle references a vertex that does not exist")
        if len(labels) != len(boundary):
            raise MeshError("one label per boundary side is required")
        if not np.all(np.isin(labels, [DIRICHLET, NEUMANN])):
            raise MeshError("boundary labels must be Dirichlet or Neumann")
        if len(generation) != len(triangles):
            raise MeshError("generation must have one entry per triangle")

        area = _signed_areas(vertices, triangles)
        if np.any(area <= 0.0):
            raise MeshError("triangles must have positive area and counterclockwise orientation")

        self.vertices = vertices
        self.triangles = triangles
        self.boundary = boundary
        self.boundary_labels = labels
        self.generation = generation
        self.areas = area
        self._build_topology()
        self._build_geometry()
        for name in ("vertices", "triangles", "boundary", "boundary_labels", "generation", "areas"):
            getattr(self, name).setflags(write=False)

    # ------------------------------------------------------------------ topology
    def _build_topology(self) -> None:
        t = self.triangles
        nt = len(t)
        nv = len(self.vertices)
        local = t[:, _LOCAL_EDGES]  # (NT, 3, 2), oriented counterclockwise
        flat = local.reshape(-1, 2)
        lo = flat.min(axis=1)
        hi = flat.max(axis=1)
        key = lo * nv + hi
        order = np.lexsort((np.arange(len(key)), key))
        skey = key[order]
        first = np.ones(len(skey), dtype=bool)
        first[1:] = skey[1:] != skey[:-1]
        side_of_sorted = np.cumsum(first) - 1
        ns = int(side_of_sorted[-1]) + 1
        counts = np.bincount(side_of_sorted, minlength=ns)
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: a side is shared by more than two triangles")

        elem_sides = np.empty(len(key), dtype=np.int64)
        elem_sides[order] = side_of_sorted
        elem_sides = elem_sides.reshape(nt, 3)

        plus = order[first]  # flat index of T+ occurrence
        sides = flat[plus].copy()
        side_elements = np.full((ns, 2), -1, dtype=np.int64)
        side_elements[:, 0] = plus // 3
        second = order[~first]
        sec_side = side_of_sorted[~first]
        side_elements[sec_side, 1] = second // 3
        # T- must traverse the side in the opposite direction
        if np.any(flat[second, 0] != sides[sec_side, 1]):
            raise MeshError("inconsistent orientation between neighbouring triangles")

        elem_sign = np.where(np.arange(3 * nt) == plus[elem_sides.ravel()], 1, -1).reshape(nt, 3)

        # boundary labels
        label = np.zeros(ns, dtype=np.int64)
        is_boundary = counts == 1
        bkey = self.boundary.min(axis=1) * nv + self.boundary.max(axis=1)
        skeys = key[plus]
        pos = np.searchsorted(skeys, bkey)
        pos = np.minimum(pos, ns - 1)
        if np.any(skeys[pos] != bkey):
            raise MeshError("a labelled boundary side is not a side of the triangulation")
        if np.any(~is_boundary[pos]):
            raise MeshError("an interior side carries a boundary label")
        if len(np.unique(pos)) != len(pos):
            raise MeshError("a boundary side is labelled twice")
        if len(pos) != int(is_boundary.sum()):
            raise MeshError("every boundary side needs a Dirichlet or Neumann label")
        label[pos] = self.boundary_labels
        if not np.any(label == DIRICHLET):
            raise MeshError("the Dirichlet boundary must be nonempty")

        self.sides = sides
        self.side_elements = side_elements
        self.side_labels = label
        self.element_sides = elem_sides
        self.element_signs = elem_sign
        for name in ("sides", "side_elements", "side_labels", "element_sides", "element_signs"):
            getattr(self, name).setflags(write=False)

    def _build_geometry(self) -> None:
        p = self.vertices
        a = p[self.sides[:, 0]]
        b = p[self.sides[:, 1]]
        tangent = b - a
        length = np.linalg.norm(tangent, axis=1)
        self.side_lengths = length
        self.side_midpoints = 0.5 * (a + b)
        self.side_normals = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1) / length[:, None]
        self.element_normals = self.side_normals[self.element_sides] * self.element_signs[:, :, None]
        self.element_side_lengths = length[self.element_sides]
        self.diameters = self.element_side_lengths.max(axis=1)
        self.centroids = p[self.triangles].mean(axis=1)
        for name in ("side_lengths", "side_midpoints", "side_normals", "element_normals",
                     "element_side_lengths", "diameters", "centroids"):
            getattr(self, name).setflags(write=False)

    # ------------------------------------------------------------------ queries
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def n_sides(self) -> int:
        return len(self.sides)

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    def element_vertices(self, elements=None) -> np.ndarray:
        """Vertex coordinates ``(M, 3, 2)`` of the selected elements."""
        t = self.triangles if elements is None else self.triangles[elements]
        return self.vertices[t]

    def sides_with_label(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.side_labels == label)

    def min_angle(self) -> float:
        """Smallest interior angle (radians) over all triangles."""
        p = self.element_vertices()
        angles = []
        for j in range(3):
            u = p[:, (j + 1) % 3] - p[:, j]
            v = p[:, (j + 2) % 3] - p[:, j]
            c = np.einsum("md,md->m", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.arccos(np.clip(c, -1.0, 1.0)))
        return float(np.min(angles))

    def elements_touching(self, point, tol: float = 1e-12) -> np.ndarray:
        """Elements having a vertex at ``point``."""
        d = np.linalg.norm(self.vertices - np.asarray(point, dtype=float), axis=1)
        hit = np.flatnonzero(d <= tol * max(1.0, self.h_max))
        return np.flatnonzero(np.isin(self.triangles, hit).any(axis=1))

    def statistics(self) -> dict:
        return {
            "vertices": self.n_vertices,
            "elements": self.n_elements,
            "sides": self.n_sides,
            "interior_sides": int(np.sum(self.side_labels == INTERIOR)),
            "dirichlet_sides": int(np.sum(self.side_labels == DIRICHLET)),
            "neumann_sides": int(np.sum(self.side_labels == NEUMANN)),
            "h_max": float(self.diameters.max()),
            "h_min": float(self.diameters.min()),
            "min_angle_deg": float(np.degrees(self.min_angle())),
            "area": float(self.areas.sum()),
            "max_generation": int(self.generation.max()),
        }


# ---------------------------------------------------------------------- builders
def _longest_edge_first(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Rotate each triangle so that vertex 0 is opposite its longest edge.

    Ties go to the edge with the lexicographically smallest sorted vertex pair.
    Rotation keeps the orientation.
    """
    out = np.empty_like(triangles)
    for i, tri in enumerate(triangles):
        best = None
        for j in range(3):
            a, b = tri[(j + 1) % 3], tri[(j + 2) % 3]
            length = np.linalg.norm(vertices[a] - vertices[b])
            key = (-round(length, 12), tuple(sorted((int(a), int(b)))))
            if best is None or key < best[0]:
                best = (key, j)
        j = best[1]
        out[i] = [tri[j], tri[(j + 1) % 3], tri[(j + 2) % 3]]
    return out


def _orient(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    triangles = np.array(triangles, dtype=np.int64)
    area = _signed_areas(vertices, triangles)
    if np.any(np.abs(area) <= 0.0):
        raise MeshError("degenerate triangle with zero area")
    flip = area < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return triangles


def from_arrays(vertices, triangles, boundary, labels, assign_refinement_edges: bool = True) -> Triangulation:
    """Build a mesh from raw lists, fixing orientation and refinement edges."""
    vertices = np.array(vertices, dtype=float).reshape(-1, 2)
    triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
        raise MeshError("triangle references a vertex that does not exist")
    triangles = _orient(vertices, triangles)
    if assign_refinement_edges:
        triangles = _longest_edge_first(vertices, triangles)
    return Triangulation(vertices, triangles, boundary, labels)


def unit_square() -> Triangulation:
    vertices = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    triangles = [(0, 1, 2), (0, 2, 3)]
    boundary = [(0, 1), (1, 2), (2, 3), (3, 0)]
    return from_arrays(vertices, triangles, boundary, ["D"] * 4)


def cooks_membrane() -> Triangulation:
    vertices = [(0.0, 0.0), (48.0, 44.0), (48.0, 60.0), (0.0, 44.0)]
    triangles = [(0, 1, 3), (3, 1, 2)]
    boundary = [(0, 3), (0, 1), (1, 2), (2, 3)]
    return from_arrays(vertices, triangles, boundary, ["D", "N", "N", "N"])


def lshape() -> Triangulation:
    """Rotated L-shape made of three squares, each split through the origin."""
    vertices = [(0.0, 0.0), (-1.0, -1.0), (0.0, -2.0), (1.0, -1.0),
                (2.0, 0.0), (1.0, 1.0), (0.0, 2.0), (-1.0, 1.0)]
    triangles = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 5), (0, 5, 6), (0, 6, 7)]
    boundary = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 0)]
    labels = ["N", "D", "D", "D", "D", "D", "D", "N"]
    return from_arrays(vertices, triangles, boundary, labels)


_NAMED = {"cooks": cooks_membrane, "lshape": lshape, "unit_square": unit_square, "square": unit_square}


def build_initial_mesh(domain_spec) -> Triangulation:
    """Return the initial mesh for a named benchmark, a mesh file, or raw data.

    ``domain_spec`` is one of ``"cooks"``, ``"lshape"``, ``"unit_square"``, a
    path to a mesh file, or a dict with keys ``vertices``, ``triangles``,
    ``boundary`` and ``labels``.
    """
    if isinstance(domain_spec, dict):
        return from_arrays(domain_spec["vertices"], domain_spec["triangles"],
                           domain_spec["boundary"], domain_spec["labels"])
    if isinstance(domain_spec, str) and domain_spec in _NAMED:
        return _NAMED[domain_spec]()
    path = Path(domain_spec)
    if path.exists():
        return read_mesh(path)
    raise MeshError(f"unknown domain {domain_spec!r}")


# ---------------------------------------------------------------------- file io
def read_mesh(path) -> Triangulation:
    """Read the ASCII ``hho-mesh 1`` format."""
    lines = [ln.split("#")[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    try:
        if lines[0].split() != ["hho-mesh", "1"]:
            raise MeshError("missing 'hho-mesh 1' header")
        nv, nt, nb = (int(x) for x in lines[1].split())
        body = lines[2:]
        if len(body) != nv + nt + nb:
            raise MeshError("line count does not match the header")
        vertices = np.array([[float(x) for x in ln.split()] for ln in body[:nv]])
        triangles = np.array([[int(x) for x in ln.split()] for ln in body[nv:nv + nt]], dtype=np.int64)
        bnd, labels = [], []
        for ln in body[nv + nt:]:
            va, vb, lab = ln.split()
            if lab not in _LABEL_CODES:
                raise MeshError(f"unknown boundary label {lab!r}")
            bnd.append((int(va), int(vb)))
            labels.append(lab)
    except MeshError:
        raise
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if vertices.shape != (nv, 2) or triangles.shape != (nt, 3):
        raise MeshError("malformed vertex or triangle record")
    # file order is authoritative for the refinement edge
    triangles = _orient(vertices, triangles)
    return Triangulation(vertices, triangles, np.array(bnd).reshape(-1, 2), labels)


def write_mesh(mesh: Triangulation, path) -> None:
    out = ["hho-mesh 1", f"{mesh.n_vertices} {mesh.n_elements} {len(mesh.boundary)}"]
    out += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    out += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    out += [f"{a} {b} {_LABEL_NAMES[int(l)]}" for (a, b), l in zip(mesh.boundary.tolist(), mesh.boundary_labels)]
    Path(path).write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------------- refinement
def refine_nvb(mesh: Triangulation, marked) -> Triangulation:
    """Newest-vertex bisection of the marked elements plus conforming closure.

    Every marked element has all three of its edges bisected (two generations
    of bisection); the closure bisects the refinement edge of every element
    that has any bisected edge until the mesh is conforming.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked, dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_elements:
        raise IndexError("marked element id out of range")

    es = mesh.element_sides
    edge_marked = np.zeros(mesh.n_sides, dtype=bool)
    edge_marked[es[marked].ravel()] = True
    while True:
        need = (edge_marked[es[:, 1]] | edge_marked[es[:, 2]]) & ~edge_marked[es[:, 0]]
        if not need.any():
            break
        edge_marked[es[need, 0]] = True

    nv = mesh.n_vertices
    new_id = np.full(mesh.n_sides, -1, dtype=np.int64)
    idx = np.flatnonzero(edge_marked)
    new_id[idx] = nv + np.arange(len(idx))
    vertices = np.vstack([mesh.vertices, mesh.side_midpoints[idx]])

    t = mesh.triangles
    v0, v1, v2 = t[:, 0], t[:, 1], t[:, 2]
    m = new_id[es[:, 0]]
    q = new_id[es[:, 1]]  # midpoint of (v2, v0)
    p = new_id[es[:, 2]]  # midpoint of (v0, v1)
    r0 = edge_marked[es[:, 0]]
    r1 = edge_marked[es[:, 1]]
    r2 = edge_marked[es[:, 2]]
    gen = mesh.generation

    children, generations = [], []

    def emit(sel, tris, g):
        if np.any(sel):
            children.append(np.stack([x[sel] for x in tris], axis=1))
            generations.append(g[sel])

    keep = ~r0
    emit(keep, (v0, v1, v2), gen)
    # first-generation child (m, v0, v1): refined further iff edge 2 marked
    emit(r0 & ~r2, (m, v0, v1), gen + 1)
    emit(r0 & r2, (p, m, v0), gen + 2)
    emit(r0 & r2, (p, v1, m), gen + 2)
    # first-generation child (m, v2, v0): refined further iff edge 1 marked
    emit(r0 & ~r1, (m, v2, v0), gen + 1)
    emit(r0 & r1, (q, m, v2), gen + 2)
    emit(r0 & r1, (q, v0, m), gen + 2)
    # restore a deterministic element order: children grouped by parent
    parent = np.concatenate([np.flatnonzero(s) for s in (keep, r0 & ~r2, r0 & r2, r0 & r2, r0 & ~r1, r0 & r1, r0 & r1) if np.any(s)])
    rank = np.concatenate([np.full(int(np.sum(s)), i) for i, s in enumerate((keep, r0 & ~r2, r0 & r2, r0 & r2, r0 & ~r1, r0 & r1, r0 & r1)) if np.any(s)])
    order = np.lexsort((rank, parent))
    triangles = np.concatenate(children)[order]
    generation = np.concatenate(generations)[order]

    # boundary sides
    bnd = mesh.boundary
    bkey_lo = bnd.min(axis=1)
    bkey_hi = bnd.max(axis=1)
    side_key = mesh.sides.min(axis=1) * nv + mesh.sides.max(axis=1)
    sorter = np.argsort(side_key)
    bside = sorter[np.searchsorted(side_key, bkey_lo * nv + bkey_hi, sorter=sorter)]
    split = edge_marked[bside]
    mid = new_id[bside]
    new_bnd = [bnd[~split], np.stack([bnd[split, 0], mid[split]], axis=1), np.stack([mid[split], bnd[split, 1]], axis=1)]
    new_lab = [mesh.boundary_labels[~split], mesh.boundary_labels[split], mesh.boundary_labels[split]]
    return Triangulation(vertices, triangles, np.concatenate(new_bnd), np.concatenate(new_lab), generation)


def uniform_refine(mesh: Triangulation, steps: int = 1) -> Triangulation:
    """Bisect every element twice (each parent becomes four children)."""
    for _ in range(steps):
        mesh = refine_nvb(mesh, np.arange(mesh.n_elements))
    return mesh
