import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from softfem import mesh as msh
from softfem.scenes import box_hex_mesh, box_surface_triangles

from helpers import random_rotation, random_tet_vertices, single_tet_dict, \
    unit_cube_hex_dict


def test_load_single_tet(tmp_mesh_file):
    m = msh.load_mesh(tmp_mesh_file(single_tet_dict()))
    assert m.num_vertices == 4
    assert m.num_tets == 1
    assert m.reordered_tets == ()


def test_load_negative_tet_is_reordered(tmp_mesh_file):
    data = single_tet_dict()
    data["tets"] = [[0, 1, 3, 2]]  # negative orientation
    m = msh.load_mesh(tmp_mesh_file(data))
    assert m.reordered_tets == (0,)
    dm = (m.vertices[m.tets[0][1:]] - m.vertices[m.tets[0][0]]).T
    assert np.linalg.det(dm) > 0


def test_load_unit_cube_hex(tmp_mesh_file):
    m = msh.load_mesh(tmp_mesh_file(unit_cube_hex_dict()))
    assert m.num_hexes == 1
    assert m.num_elements == 1


def test_load_rejects_bad_indices(tmp_mesh_file):
    data = single_tet_dict()
    data["tets"] = [[0, 1, 2, 9]]
    with pytest.raises(msh.MeshError):
        msh.load_mesh(tmp_mesh_file(data))
    data = single_tet_dict()
    data["tets"] = [[0, 1, 2, 2]]
    with pytest.raises(msh.MeshError):
        msh.load_mesh(tmp_mesh_file(data))


def test_load_rejects_degenerate_tet(tmp_mesh_file):
    data = single_tet_dict()
    data["vertices"][3] = [0.5, 0.5, 0.0]  # coplanar
    with pytest.raises(msh.MeshError, match="tets\\[0\\]"):
        msh.load_mesh(tmp_mesh_file(data))


def test_load_rejects_unknown_keys(tmp_mesh_file):
    data = single_tet_dict()
    data["nodes"] = []
    with pytest.raises(msh.MeshError, match="unknown"):
        msh.load_mesh(tmp_mesh_file(data))


def test_rest_precompute_unit_tet(tmp_mesh_file):
    m = msh.load_mesh(tmp_mesh_file(single_tet_dict()))
    rest = msh.rest_precompute(m, 6.0)
    assert_allclose(rest.tet_volume, [1.0 / 6.0], rtol=1e-15)
    assert_allclose(rest.masses, 0.25 * np.ones(4), rtol=1e-15)


def test_rest_precompute_unit_cube(tmp_mesh_file):
    m = msh.load_mesh(tmp_mesh_file(unit_cube_hex_dict()))
    rest = msh.rest_precompute(m, 8.0)
    assert_allclose(rest.hex_volume, [1.0], rtol=1e-13)
    assert_allclose(rest.masses, np.ones(8), rtol=1e-13)
    # 2x2x2 quadrature weights sum to the volume
    assert_allclose(rest.hex_weights.sum(), 1.0, rtol=1e-13)


def test_rest_precompute_rejects_nonpositive_density(tmp_mesh_file):
    m = msh.load_mesh(tmp_mesh_file(single_tet_dict()))
    with pytest.raises(msh.MeshError):
        msh.rest_precompute(m, 0.0)


def test_lumped_mass_conservation(tmp_mesh_file):
    mesh_dict = box_hex_mesh(3, 2, 2, 0.1, 0.2, 0.3)
    m = msh.load_mesh(tmp_mesh_file(mesh_dict))
    rng = np.random.default_rng(3)
    rho = rng.uniform(100.0, 2000.0, m.num_elements)
    rest = msh.rest_precompute(m, rho)
    expected = float(rho @ rest.element_volumes)
    assert abs(rest.masses.sum() - expected) < 1e-12 * expected


def test_deformation_gradient_identity_random_tets(tmp_mesh_file):
    rng = np.random.default_rng(0)
    for _ in range(20):
        pts = random_tet_vertices(rng)
        data = {"vertices": pts.tolist(), "tets": [[0, 1, 2, 3]]}
        m = msh.load_mesh(tmp_mesh_file(data))
        rest = msh.rest_precompute(m, 1.0)
        F = msh.deformation_gradient(0, m, rest, m.vertices)
        assert np.abs(F - np.eye(3)).max() < 1e-12


def test_deformation_gradient_affine(tmp_mesh_file):
    rng = np.random.default_rng(1)
    mesh_dict = box_hex_mesh(2, 2, 2, 0.5, 0.5, 0.5)
    m = msh.load_mesh(tmp_mesh_file(mesh_dict))
    rest = msh.rest_precompute(m, 1.0)
    A = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
    x = m.vertices @ A.T + rng.standard_normal(3)
    for e in range(m.num_elements):
        F = msh.deformation_gradient(e, m, rest, x)
        assert np.abs(F - A).max() < 1e-10


def test_deformation_gradient_uniform_scaling(tmp_mesh_file):
    m = msh.load_mesh(tmp_mesh_file(single_tet_dict()))
    rest = msh.rest_precompute(m, 1.0)
    F = msh.deformation_gradient(0, m, rest, 2.0 * m.vertices)
    assert_allclose(F, 2.0 * np.eye(3), atol=1e-14)


def test_deformation_gradient_rotation(tmp_mesh_file):
    rng = np.random.default_rng(2)
    m = msh.load_mesh(tmp_mesh_file(single_tet_dict()))
    rest = msh.rest_precompute(m, 1.0)
    R = random_rotation(rng)
    F = msh.deformation_gradient(0, m, rest, m.vertices @ R.T)
    assert np.abs(F - R).max() < 1e-12
    assert abs(np.linalg.det(F) - 1.0) < 1e-12


def test_surface_normal_examples():
    n = msh.surface_normal([0, 0, 0], [1, 0, 0], [0, 1, 0])
    assert_allclose(n, [0, 0, 0.5], atol=1e-15)
    n = msh.surface_normal([0, 0, 0], [1, 0, 0], [2, 0, 0])
    assert_allclose(n, [0, 0, 0], atol=1e-15)


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=25, deadline=None)
def test_surface_normal_antisymmetry(seed):
    rng = np.random.default_rng(seed)
    x0, x1, x2 = rng.standard_normal((3, 3))
    assert_allclose(msh.surface_normal(x0, x1, x2),
                    -msh.surface_normal(x0, x2, x1), atol=1e-12)


def test_closed_surface_normals_cancel():
    rng = np.random.default_rng(4)
    mesh_dict = box_hex_mesh(2, 2, 2, 0.1, 0.1, 0.1)
    tris = np.array(box_surface_triangles(2, 2, 2))
    x = np.asarray(mesh_dict["vertices"]) + 0.02 * rng.standard_normal((27, 3))
    normals = msh.surface_normals(x, tris)
    total_area = np.linalg.norm(normals, axis=1).sum()
    assert np.linalg.norm(normals.sum(axis=0)) < 1e-9 * total_area


def test_inconsistent_closed_surface_rejected(tmp_mesh_file):
    data = unit_cube_hex_dict()
    tris = box_surface_triangles(1, 1, 1)
    tris[0] = [tris[0][0], tris[0][2], tris[0][1]]  # flip one triangle
    data["triangle_sets"] = {"skin": tris}
    with pytest.raises(msh.MeshError, match="oriented"):
        msh.load_mesh(tmp_mesh_file(data))


def test_min_edge_length(tmp_mesh_file):
    m = msh.load_mesh(tmp_mesh_file(box_hex_mesh(2, 1, 1, 0.2, 0.3, 0.4)))
    assert abs(msh.min_edge_length(m) - 0.2) < 1e-15
