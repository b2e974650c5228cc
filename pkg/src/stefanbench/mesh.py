"""Triangular meshes of the unit square with a fixed six-level family.

The family is structured: level 1 partitions the square into four half-size
blocks, each triangulated by a coarsened criss-cross pattern (two of the four
cell centres are pulled towards the block centre, the block-centre grid vertex
is dropped and the resulting quad is split by its short diagonal).  This keeps
every edge at most 0.25 long while producing exactly 56 cells, 92 edges and
37 vertices.  Levels 2..6 are uniform midpoint refinements, so cell counts
grow by 4 and the mesh size halves per level.

Vertices of level k keep their indices in level k+1, which later allows exact
restriction of fine-mesh fields onto coarser members of the family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Mesh", "generate_mesh", "refine", "save_mesh", "load_mesh", "FAMILY_TABLE"]

# level -> (size, cells, edges, vertices); reference data for `mesh --check`
FAMILY_TABLE = {
    1: (0.250, 56, 92, 37),
    2: (0.125, 224, 352, 129),
    3: (0.0625, 896, 1376, 481),
    4: (0.0313, 3584, 5440, 1857),
    5: (0.0156, 14336, 21632, 7297),
    6: (0.0078, 57344, 86272, 28929),
}

_BOUNDARY_TOL = 1e-12

# inward pull applied to two opposite cell centres of each block; any value in
# (0.0366, 0.055) keeps all edges <= 0.25 and all triangles well-shaped
_PULL = 0.045


@dataclass
class Mesh:
    vertices: np.ndarray  # (nv, 2) coordinates in [0, 1]^2
    triangles: np.ndarray  # (nt, 3) vertex indices, counterclockwise
    boundary_vertices: np.ndarray = field(init=False)
    size_h: float = field(init=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        on_edge = (
            (np.abs(x) < _BOUNDARY_TOL)
            | (np.abs(x - 1.0) < _BOUNDARY_TOL)
            | (np.abs(y) < _BOUNDARY_TOL)
            | (np.abs(y - 1.0) < _BOUNDARY_TOL)
        )
        self.boundary_vertices = np.flatnonzero(on_edge)
        self.size_h = float(np.sqrt(self._edge_lengths_sq().max()))

    def _edge_lengths_sq(self):
        p = self.vertices[self.triangles]
        d = p - np.roll(p, -1, axis=1)
        return np.einsum("tkd,tkd->tk", d, d)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        v1 = p[:, 1] - p[:, 0]
        v2 = p[:, 2] - p[:, 0]
        return 0.5 * (v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0])

    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex-index pairs, shape (ne, 2)."""
        t = self.triangles
        pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0)

    def counts(self) -> tuple[int, int, int]:
        """(cells, edges, vertices)."""
        return len(self.triangles), len(self.edges()), len(self.vertices)


def _block_triangles(vid, ox: float, oy: float) -> list[tuple[int, int, int]]:
    # one 0.5 x 0.5 block of the level-1 pattern, offset by (ox, oy)
    g00 = vid(ox, oy)
    m_s = vid(ox + 0.25, oy)
    g10 = vid(ox + 0.5, oy)
    m_e = vid(ox + 0.5, oy + 0.25)
    g11 = vid(ox + 0.5, oy + 0.5)
    m_n = vid(ox + 0.25, oy + 0.5)
    g01 = vid(ox, oy + 0.5)
    m_w = vid(ox, oy + 0.25)
    a = vid(ox + 0.125 + _PULL, oy + 0.125 + _PULL)
    b = vid(ox + 0.375, oy + 0.125)
    c = vid(ox + 0.375 - _PULL, oy + 0.375 - _PULL)
    d = vid(ox + 0.125, oy + 0.375)
    return [
        (g00, m_s, a), (m_w, g00, a),
        (m_s, g10, b), (g10, m_e, b),
        (m_e, g11, c), (g11, m_n, c),
        (m_n, g01, d), (g01, m_w, d),
        (b, a, m_s), (c, b, m_e), (d, c, m_n), (a, d, m_w),
        (a, b, c), (a, c, d),
    ]


def _base_mesh() -> Mesh:
    index: dict[tuple[float, float], int] = {}
    coords: list[tuple[float, float]] = []

    def vid(x: float, y: float) -> int:
        key = (round(x, 9), round(y, 9))
        if key not in index:
            index[key] = len(coords)
            coords.append((x, y))
        return index[key]

    triangles: list[tuple[int, int, int]] = []
    for ox in (0.0, 0.5):
        for oy in (0.0, 0.5):
            triangles.extend(_block_triangles(vid, ox, oy))
    return Mesh(np.array(coords), np.array(triangles))


def refine(mesh: Mesh) -> Mesh:
    """Uniform refinement: each triangle splits into four via edge midpoints.

    Parent vertices keep their indices; midpoints are appended in a
    deterministic order.
    """
    coords = list(map(tuple, mesh.vertices))
    midpoint: dict[tuple[int, int], int] = {}

    def mid(i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        if key not in midpoint:
            midpoint[key] = len(coords)
            coords.append(
                (
                    0.5 * (coords[i][0] + coords[j][0]),
                    0.5 * (coords[i][1] + coords[j][1]),
                )
            )
        return midpoint[key]

    triangles = []
    for a, b, c in mesh.triangles:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        triangles.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
    return Mesh(np.array(coords), np.array(triangles))


def generate_mesh(level: int) -> Mesh:
    """Member ``level`` (1..6) of the mesh family."""
    if not isinstance(level, (int, np.integer)) or not 1 <= level <= 6:
        raise ValueError(f"mesh level must be an integer in 1..6, got {level!r}")
    mesh = _base_mesh()
    for _ in range(level - 1):
        mesh = refine(mesh)
    return mesh


def save_mesh(mesh: Mesh, path) -> None:
    """Write the text format: 'NV NT', NV lines 'x y b', NT lines 'i j k'."""
    flags = np.zeros(len(mesh.vertices), dtype=int)
    flags[mesh.boundary_vertices] = 1
    with open(path, "w") as fh:
        fh.write(f"{len(mesh.vertices)} {len(mesh.triangles)}\n")
        for (x, y), b in zip(mesh.vertices, flags):
            fh.write(f"{float(x)!r} {float(y)!r} {b}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")


def load_mesh(path) -> Mesh:
    """Read the text format written by :func:`save_mesh`."""
    with open(path) as fh:
        nv, nt = map(int, fh.readline().split())
        verts = np.empty((nv, 2))
        flags = np.empty(nv, dtype=int)
        for i in range(nv):
            sx, sy, sb = fh.readline().split()
            verts[i] = (float(sx), float(sy))
            flags[i] = int(sb)
        tris = np.empty((nt, 3), dtype=np.int64)
        for t in range(nt):
            tris[t] = list(map(int, fh.readline().split()))
    mesh = Mesh(verts, tris)
    stored = set(np.flatnonzero(flags == 1))
    derived = set(mesh.boundary_vertices.tolist())
    if stored != derived:
        raise ValueError("boundary flags disagree with vertex coordinates")
    return mesh
