import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from batchfem.engine import KernelConfig
from batchfem.exceptions import ConfigurationError, DegenerateElementError
from batchfem.geometry import (
    Mesh, element_jacobian, geometry_tensor, geometry_tensors, jacobians, jitter_mesh, load_mesh,
    dump_mesh, pack_geometry, structured_simplicial_mesh,
)


def single(coords):
    coords = np.asarray(coords, dtype=float)
    return Mesh(coords.shape[1], coords, [list(range(len(coords)))])


@pytest.mark.parametrize("dim, n, elements, vertices", [(2, 1, 2, 4), (2, 4, 32, 25), (3, 2, 48, 27)])
def test_structured_counts(dim, n, elements, vertices):
    mesh = structured_simplicial_mesh(dim, n)
    assert mesh.num_elements == elements
    assert mesh.num_vertices == vertices


@pytest.mark.parametrize("dim, n", [(2, 3), (3, 3)])
def test_structured_mesh_tiles_the_unit_box(dim, n):
    mesh = structured_simplicial_mesh(dim, n)
    _, _, det = jacobians(mesh.element_coordinates())
    assert np.all(det > 0)
    factorial = 2 if dim == 2 else 6
    assert det.sum() / factorial == pytest.approx(1.0, abs=1e-14)


def test_structured_mesh_rejects_bad_n():
    with pytest.raises(ConfigurationError):
        structured_simplicial_mesh(2, 0)


def test_jacobian_examples():
    jac = element_jacobian(single([[0, 0], [1, 0], [0, 1]]), 0)
    np.testing.assert_array_equal(jac.J, np.eye(2))
    assert jac.detJ == 1
    jac = element_jacobian(single([[0, 0], [2, 0], [0, 2]]), 0)
    np.testing.assert_array_equal(jac.J, 2 * np.eye(2))
    assert jac.detJ == 4
    jac = element_jacobian(single([[0, 0], [1, 0], [1, 1]]), 0)
    np.testing.assert_array_equal(jac.J, [[1, 1], [0, 1]])
    assert jac.detJ == 1


def test_geometry_tensor_examples():
    G = geometry_tensor(element_jacobian(single([[0, 0], [1, 0], [0, 1]]), 0))
    np.testing.assert_array_equal(G, np.eye(2))
    G = geometry_tensor(element_jacobian(single([[0, 0], [2, 0], [0, 2]]), 0))
    np.testing.assert_array_equal(G, np.eye(2))
    G = geometry_tensor(element_jacobian(single([[0, 0], [1, 0], [1, 1]]), 0))
    np.testing.assert_array_equal(G, [[2, -1], [-1, 1]])


def test_degenerate_element_is_named():
    coords = np.array([[0, 0], [1, 0], [0, 1], [2, 0]], dtype=float)
    mesh = Mesh(2, coords, [[0, 1, 2], [0, 1, 3], [0, 2, 1]])
    with pytest.raises(DegenerateElementError) as err:
        element_jacobian(mesh, 1)
    assert err.value.cells == [1]
    with pytest.raises(DegenerateElementError) as err:
        jacobians(mesh.element_coordinates())
    assert err.value.cells == [1, 2]


def test_mesh_validation():
    with pytest.raises(ValueError):
        Mesh(2, [[0, 0], [1, 0], [0, 1]], [[0, 1, 3]])
    with pytest.raises(ValueError):
        Mesh(2, [[0, 0, 0]], [[0, 0, 0]])


def test_jitter_zero_is_identity():
    mesh = structured_simplicial_mesh(2, 4)
    np.testing.assert_array_equal(jitter_mesh(mesh, 0.0, 3).vertices, mesh.vertices)


def test_jitter_is_deterministic_and_keeps_boundary():
    mesh = structured_simplicial_mesh(2, 8)
    a, b = jitter_mesh(mesh, 0.15, 42), jitter_mesh(mesh, 0.15, 42)
    np.testing.assert_array_equal(a.vertices, b.vertices)
    assert not np.array_equal(a.vertices, jitter_mesh(mesh, 0.15, 43).vertices)
    boundary = np.any((mesh.vertices == 0) | (mesh.vertices == 1), axis=1)
    np.testing.assert_array_equal(a.vertices[boundary], mesh.vertices[boundary])
    moved = np.abs(a.vertices - mesh.vertices)
    assert moved[~boundary].max() > 0
    assert moved.max() <= 0.15 / 8 + 1e-15
    _, _, det = jacobians(a.element_coordinates())
    assert np.all(det > 0)


def test_jitter_bounds():
    mesh = structured_simplicial_mesh(2, 2)
    with pytest.raises(ConfigurationError):
        jitter_mesh(mesh, 0.3, 0)
    with pytest.raises(ConfigurationError):
        jitter_mesh(mesh, -0.1, 0)


def test_vectorized_matches_per_element_bitwise():
    mesh = jitter_mesh(structured_simplicial_mesh(3, 3), 0.15, 7)
    G = geometry_tensors(mesh.element_coordinates())
    for e in range(mesh.num_elements):
        assert G[e].tobytes() == geometry_tensor(element_jacobian(mesh, e)).tobytes()


@pytest.mark.parametrize("dim", [2, 3])
def test_jacobian_inverse_and_spd(dim):
    mesh = jitter_mesh(structured_simplicial_mesh(dim, 4), 0.2, 11)
    J, Jinv, det = jacobians(mesh.element_coordinates())
    eye = np.broadcast_to(np.eye(dim), J.shape)
    assert np.abs(J @ Jinv - eye).max() < 1e-12
    G = geometry_tensors(mesh.element_coordinates())
    np.testing.assert_array_equal(G, np.transpose(G, (0, 2, 1)))
    assert np.all(np.linalg.eigvalsh(G) > 0)


@settings(max_examples=40, deadline=None)
@given(dim=st.sampled_from([2, 3]), scale=st.floats(0.1, 10.0), seed=st.integers(0, 2**16))
def test_scaling_law(dim, scale, seed):
    mesh = jitter_mesh(structured_simplicial_mesh(dim, 2), 0.15, seed)
    G = geometry_tensors(mesh.element_coordinates())
    Gs = geometry_tensors(mesh.scaled(scale).element_coordinates())
    np.testing.assert_allclose(Gs, scale ** (dim - 2) * G, rtol=1e-12, atol=1e-12)


def test_translation_leaves_g_bitwise_unchanged():
    # dyadic coordinates and an integer shift keep the edge vectors exact
    mesh = structured_simplicial_mesh(3, 4)
    G = geometry_tensors(mesh.element_coordinates())
    Gt = geometry_tensors(mesh.translated([3.0, -5.0, 2.0]).element_coordinates())
    assert G.tobytes() == Gt.tobytes()


def test_pack_two_reference_triangles():
    coords = np.array([[[0, 0], [1, 0], [0, 1]]] * 2, dtype=float)
    packed = pack_geometry(coords, KernelConfig(2, 1, precision="double"))
    np.testing.assert_array_equal(packed.data, [1, 0, 0, 1, 1, 0, 0, 1])


def test_pack_pads_last_batch():
    mesh = jitter_mesh(structured_simplicial_mesh(2, 2), 0.1, 1)
    coords = mesh.element_coordinates()[:3]
    packed = pack_geometry(coords, KernelConfig(2, 1, precision="double"))
    assert packed.num_batches == 2
    assert len(packed.data) == 16
    np.testing.assert_array_equal(packed.data[12:16], packed.data[8:12])


def test_goffset_golden_index():
    # 2D, batch size 5: (g=1, e=0, mu=1, nu=0) -> 1*4*5 + 0*4 + 1*2 + 0 = 22
    mesh = jitter_mesh(structured_simplicial_mesh(2, 3), 0.1, 5)
    packed = pack_geometry(mesh, KernelConfig(5, 1, precision="double"))
    G = geometry_tensors(mesh.element_coordinates())
    assert packed.batch_offset(1) == 20
    assert packed.data[22] == G[5, 1, 0]


def test_pack_unpack_roundtrip_bitwise():
    mesh = jitter_mesh(structured_simplicial_mesh(3, 3), 0.15, 2)
    packed = pack_geometry(mesh, KernelConfig(64, 4, precision="double"))
    G = geometry_tensors(mesh.element_coordinates())
    assert packed.unpack().tobytes() == G.tobytes()
    for e in (0, 63, 64, mesh.num_elements - 1):
        assert packed.element_tensor(e).tobytes() == G[e].tobytes()


def test_pack_single_precision_rounds_once():
    mesh = jitter_mesh(structured_simplicial_mesh(2, 3), 0.1, 5)
    packed = pack_geometry(mesh, KernelConfig(4, 2, precision="single"))
    assert packed.data.dtype == np.float32
    G = geometry_tensors(mesh.element_coordinates()).astype(np.float32)
    assert packed.unpack().tobytes() == G.tobytes()


def test_mesh_text_roundtrip():
    mesh = jitter_mesh(structured_simplicial_mesh(3, 2), 0.15, 9)
    buf = io.StringIO()
    dump_mesh(mesh, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "3 27 48"
    back = load_mesh(io.StringIO(text))
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.cells, mesh.cells)
