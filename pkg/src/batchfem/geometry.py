"""Simplicial meshes, affine element Jacobians and geometry tensors.

Jacobian convention: column ``k`` of ``J`` is ``x[k+1] - x[0]`` for the cell's
vertices in connectivity order.  The per-element routines and the vectorized
ones share the same closed-form arithmetic, so their results agree bitwise.
"""
import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DegenerateElementError
from .reference import check_dim


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    vertices: np.ndarray
    cells: np.ndarray

    def __post_init__(self):
        check_dim(self.dim)
        vertices = np.asarray(self.vertices, dtype=np.float64)
        cells = np.asarray(self.cells, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != self.dim:
            raise ValueError(f"vertices must have shape (n, {self.dim}), got {vertices.shape}")
        if cells.ndim != 2 or cells.shape[1] != self.dim + 1:
            raise ValueError(f"cells must have shape (m, {self.dim + 1}), got {cells.shape}")
        if cells.size and (cells.min() < 0 or cells.max() >= len(vertices)):
            raise ValueError("cell references a vertex index out of range")
        vertices.setflags(write=False)
        cells.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "cells", cells)

    @property
    def num_elements(self):
        return len(self.cells)

    @property
    def num_vertices(self):
        return len(self.vertices)

    def element_coordinates(self):
        """Vertex coordinates per cell, shape ``(numElements, dim+1, dim)``."""
        return self.vertices[self.cells]

    def scaled(self, factor):
        return Mesh(self.dim, self.vertices * factor, self.cells)

    def translated(self, offset):
        return Mesh(self.dim, self.vertices + np.asarray(offset, dtype=np.float64), self.cells)


@dataclass(frozen=True, eq=False)
class ElementJacobian:
    J: np.ndarray
    Jinv: np.ndarray
    detJ: float


def _det_and_adjugate(J):
    """Closed-form determinant and adjugate of stacked 2x2 or 3x3 matrices."""
    d = J.shape[-1]
    adj = np.empty_like(J)
    if d == 2:
        a, b = J[:, 0, 0], J[:, 0, 1]
        c, e = J[:, 1, 0], J[:, 1, 1]
        det = a * e - b * c
        adj[:, 0, 0] = e
        adj[:, 0, 1] = -b
        adj[:, 1, 0] = -c
        adj[:, 1, 1] = a
        return det, adj
    # cofactors, then det by expansion along the first row
    for r in range(3):
        for c in range(3):
            r1, r2 = [x for x in range(3) if x != r]
            c1, c2 = [x for x in range(3) if x != c]
            minor = J[:, r1, c1] * J[:, r2, c2] - J[:, r1, c2] * J[:, r2, c1]
            adj[:, c, r] = minor if (r + c) % 2 == 0 else -minor
    det = J[:, 0, 0] * adj[:, 0, 0] + J[:, 0, 1] * adj[:, 1, 0] + J[:, 0, 2] * adj[:, 2, 0]
    return det, adj


def jacobians(coords):
    """Stacked ``(J, Jinv, detJ)`` for element coordinates ``(n, dim+1, dim)``.

    Raises DegenerateElementError naming every element with ``detJ <= 0``.
    """
    coords = np.asarray(coords, dtype=np.float64)
    J = np.transpose(coords[:, 1:, :] - coords[:, :1, :], (0, 2, 1))
    det, adj = _det_and_adjugate(J)
    bad = np.flatnonzero(~(det > 0))
    if bad.size:
        raise DegenerateElementError(bad.tolist())
    Jinv = adj / det[:, None, None]
    return J, Jinv, det


def geometry_tensors(coords):
    """``G = Jinv Jinv^T |J|`` for every element, shape ``(n, dim, dim)``, exactly symmetric."""
    _, Jinv, det = jacobians(coords)
    return _geometry_from_jacobian(Jinv, det)


def _geometry_from_jacobian(Jinv, det):
    n, d, _ = Jinv.shape
    G = np.empty((n, d, d), dtype=np.float64)
    for mu in range(d):
        for nu in range(mu, d):
            acc = Jinv[:, mu, 0] * Jinv[:, nu, 0]
            for alpha in range(1, d):
                acc = acc + Jinv[:, mu, alpha] * Jinv[:, nu, alpha]
            G[:, mu, nu] = acc * det
            G[:, nu, mu] = G[:, mu, nu]
    return G


def element_jacobian(mesh, cell_index):
    if not 0 <= cell_index < mesh.num_elements:
        raise IndexError(f"cell {cell_index} out of range for {mesh.num_elements} elements")
    coords = mesh.vertices[mesh.cells[cell_index]][None]
    try:
        J, Jinv, det = jacobians(coords)
    except DegenerateElementError:
        raise DegenerateElementError([cell_index]) from None
    return ElementJacobian(J[0], Jinv[0], float(det[0]))


def geometry_tensor(jac):
    if not jac.detJ > 0:
        raise DegenerateElementError([], "geometry tensor requested for a degenerate element")
    return _geometry_from_jacobian(jac.Jinv[None], np.array([jac.detJ]))[0]


# -- meshes ------------------------------------------------------------------

def structured_simplicial_mesh(dim, n):
    """Unit square (``2n^2`` triangles) or unit cube (``6n^3`` Kuhn tetrahedra)."""
    dim = check_dim(dim)
    if int(n) != n or n < 1:
        raise ConfigurationError(f"grid size must be a positive integer, got {n!r}")
    n = int(n)
    ticks = np.arange(n + 1) / n
    # vertex (i0, i1[, i2]) has index i0 + i1*(n+1) [+ i2*(n+1)^2]
    grid = np.meshgrid(*([ticks] * dim), indexing="ij")
    vertices = np.stack([g.ravel(order="F") for g in grid], axis=1)
    strides = (n + 1) ** np.arange(dim)

    origins = np.stack(
        [g.ravel(order="F") for g in np.meshgrid(*([np.arange(n)] * dim), indexing="ij")], axis=1
    )
    base = origins @ strides

    if dim == 2:
        v00, v10, v01, v11 = base, base + 1, base + strides[1], base + 1 + strides[1]
        tris = np.stack([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)], axis=1)
        cells = tris.reshape(-1, 3)
    else:
        tets = []
        for perm in itertools.permutations(range(3)):
            corner = np.zeros(3, dtype=np.int64)
            path = [0]
            for axis in perm:
                corner[axis] = 1
                path.append(int(corner @ strides))
            tet = list(path)
            # odd permutations yield negatively oriented tets; swap the last two vertices
            if _permutation_parity(perm):
                tet[2], tet[3] = tet[3], tet[2]
            tets.append(tet)
        offsets = np.array(tets, dtype=np.int64)
        cells = (base[:, None, None] + offsets[None]).reshape(-1, 4)
    mesh = Mesh(dim, vertices, cells)
    jacobians(mesh.element_coordinates())
    return mesh


def _permutation_parity(perm):
    parity = 0
    perm = list(perm)
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            parity ^= perm[i] > perm[j]
    return parity


def jitter_mesh(mesh, magnitude, seed, spacing=None):
    """Displace interior vertices by uniform offsets in ``[-magnitude*h, magnitude*h]``.

    ``h`` defaults to the smallest edge length of the mesh.  Boundary vertices
    (those on the bounding box) are left untouched.
    """
    if not 0 <= magnitude <= 0.2:
        raise ConfigurationError(f"jitter magnitude must lie in [0, 0.2], got {magnitude!r}")
    if magnitude == 0:
        return mesh
    if spacing is None:
        spacing = _min_edge_length(mesh)
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    on_boundary = np.any((mesh.vertices == lo) | (mesh.vertices == hi), axis=1)
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-magnitude * spacing, magnitude * spacing, size=mesh.vertices.shape)
    offsets[on_boundary] = 0.0
    jittered = Mesh(mesh.dim, mesh.vertices + offsets, mesh.cells)
    try:
        jacobians(jittered.element_coordinates())
    except DegenerateElementError as err:
        raise DegenerateElementError(
            err.cells, f"jitter {magnitude} inverted {len(err.cells)} element(s); lower the magnitude"
        ) from None
    return jittered


def _min_edge_length(mesh):
    coords = mesh.element_coordinates()
    lengths = [
        np.linalg.norm(coords[:, a] - coords[:, b], axis=1)
        for a, b in itertools.combinations(range(mesh.dim + 1), 2)
    ]
    return float(np.min(lengths))


# -- batch packing -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PackedGeometry:
    """G tensors laid out as ``[batch, element, mu, nu]``, flattened.

    Entry ``(g, e, mu, nu)`` is at ``g*DIM*DIM*ELEMENT_BATCH_SIZE + e*DIM*DIM + mu*DIM + nu``.
    The final batch is padded with copies of the last element.
    """

    data: np.ndarray
    dim: int
    element_batch_size: int
    num_elements: int

    @property
    def num_batches(self):
        return len(self.data) // (self.element_batch_size * self.dim * self.dim)

    def batch_offset(self, batch):
        return batch * self.dim * self.dim * self.element_batch_size

    def element_tensor(self, element):
        g, e = divmod(element, self.element_batch_size)
        off = self.batch_offset(g) + e * self.dim * self.dim
        return self.data[off:off + self.dim * self.dim].reshape(self.dim, self.dim)

    def unpack(self):
        d = self.dim
        return self.data.reshape(-1, d, d)[:self.num_elements]


def pad_to_batches(values, batch_size):
    """Pad the leading axis to a multiple of ``batch_size`` by repeating the last row."""
    n = len(values)
    num_batches = -(-n // batch_size)
    pad = num_batches * batch_size - n
    if pad and n:
        values = np.concatenate([values, np.repeat(values[-1:], pad, axis=0)])
    return values, num_batches


def pack_geometry(mesh, config, dtype=None):
    """Pack the mesh's geometry tensors for ``config.element_batch_size``.

    ``dtype`` defaults to the config's precision; G is always computed in double
    and rounded once.
    """
    if dtype is None:
        dtype = config.dtype
    coords = mesh.element_coordinates() if isinstance(mesh, Mesh) else np.asarray(mesh)
    dim = coords.shape[-1]
    G = geometry_tensors(coords)
    padded, _ = pad_to_batches(G, config.element_batch_size)
    data = np.ascontiguousarray(padded.reshape(-1).astype(dtype))
    data.setflags(write=False)
    return PackedGeometry(data, dim, config.element_batch_size, len(G))


# -- text format ---------------------------------------------------------------

def dump_mesh(mesh, fh):
    """Header ``dim numVertices numElements``, then vertex lines, then 0-based cell lines."""
    fh.write(f"{mesh.dim} {mesh.num_vertices} {mesh.num_elements}\n")
    for v in mesh.vertices:
        fh.write(" ".join(repr(float(x)) for x in v) + "\n")
    for c in mesh.cells:
        fh.write(" ".join(str(int(i)) for i in c) + "\n")


def load_mesh(fh):
    header = fh.readline().split()
    if len(header) != 3:
        raise ValueError("mesh header must be 'dim numVertices numElements'")
    dim, nv, ne = (int(x) for x in header)
    vertices = [[float(x) for x in fh.readline().split()] for _ in range(nv)]
    cells = [[int(x) for x in fh.readline().split()] for _ in range(ne)]
    vertices = np.array(vertices, dtype=np.float64).reshape(nv, dim)
    cells = np.array(cells, dtype=np.int64).reshape(ne, dim + 1)
    return Mesh(dim, vertices, cells)
