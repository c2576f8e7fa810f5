import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinbie import geometry as geo


def test_circle_quadrature_is_spectral():
    c = geo.make_circle(2.0, 32)
    assert abs(c.length - 4 * np.pi) < 1e-12
    assert abs(np.sum(c.weights * c.nodes.real**2) - 8 * np.pi) < 1e-11
    assert np.allclose(c.normal, c.nodes / 2)


def test_ellipse_perimeter_against_elliptic_integral():
    from scipy.special import ellipe

    e = geo.make_ellipse(2.0, 1.0, 128)
    exact = 4 * 2.0 * ellipe(1 - 0.25)
    assert abs(e.length - exact) < 1e-12


def test_orientation_and_containment(ellipse128):
    assert ellipse128.contains(0.3 + 0.2j)[0]
    assert not ellipse128.contains(2.5 + 0j)[0]
    # counterclockwise: outward normal is the tangent turned clockwise
    assert np.allclose(ellipse128.normal, -1j * ellipse128.tangent)


@given(st.floats(0.15, np.pi - 0.05), st.sampled_from([32, 64, 128]))
@settings(max_examples=25, deadline=None)
def test_lens_area_and_corner_angle(theta, m):
    c = geo.make_corner_curve(theta, m)
    # area by the divergence theorem against the exact lens area
    half = theta / 2
    r = 0.5 / np.sin(half)
    exact = 2 * (r**2 * half - 0.5 * r**2 * np.sin(theta))
    area = 0.5 * np.sum(c.weights * (c.nodes.conj() * c.normal).real)
    assert abs(area - exact) < 5e-3 * exact
    # the tangents at the first nodes of the two arcs meet at the corner angle
    t_first = c.tangent[0]
    t_last = c.tangent[-1]
    angle = np.angle(-t_last / t_first)
    assert abs(abs(angle) - theta) < 0.05


def test_corner_curve_grading_clusters_nodes():
    c = geo.make_corner_curve(np.pi / 4, 128, 3.0)
    assert np.min(np.abs(c.nodes)) < 1e-3
    assert c.weights.min() < 1e-3 * c.weights.max()


def test_icosphere_properties():
    s = geo.make_icosphere(1.0, 2)
    assert s.size == 320
    assert abs(s.total_area - 4 * np.pi) < 0.05 * 4 * np.pi
    assert np.all(np.einsum("ij,ij->i", s.normals, s.centroids) > 0)
    assert np.allclose(s.solid_angle(np.array([[0.1, 0.0, 0.2], [3.0, 0.0, 0.0]])), [1.0, 0.0], atol=1e-10)


def test_refinement_and_area_convergence():
    errs = [abs(geo.make_icosphere(1.0, s).total_area - 4 * np.pi) for s in (1, 2, 3)]
    assert errs[1] < errs[0] / 3 and errs[2] < errs[1] / 3
    assert geo.refine(geo.make_circle(1.0, 16)).size == 32
    assert geo.refine(geo.make_icosphere(1.0, 1)).size == 320


def test_merge_labels_parts():
    a = geo.make_icosphere(0.5, 1)
    b = geo.make_icosphere(0.5, 1, center=(2.0, 0.0, 0.0))
    m = geo.merge_surfaces([a, b])
    assert m.size == 160 and set(m.part.tolist()) == {0, 1}
    assert list(m.region_of(np.array([[0.0, 0, 0], [2.0, 0, 0], [5.0, 0, 0]]))) == [1, 2, 0]
    assert geo.refine(m).size == 640


def test_serialization_roundtrip(tmp_path):
    for mesh in (geo.make_corner_curve(np.pi / 3, 32), geo.make_icosphere(1.0, 1)):
        path = tmp_path / "mesh.json"
        geo.save_mesh(mesh, path)
        back = geo.load_mesh(path)
        assert np.allclose(back.points, mesh.points)
        assert np.allclose(back.weights, mesh.weights)


def test_validation_errors():
    with pytest.raises(ValueError):
        geo.make_circle(1.0, 7)
    with pytest.raises(ValueError):
        geo.make_corner_curve(0.0, 32)
    with pytest.raises(ValueError):
        geo.make_icosphere(1.0, 9)
    s = geo.make_icosphere(1.0, 0)
    with pytest.raises(ValueError):
        geo.Surface3D(s.vertices, s.triangles[:-1])
    bad = s.triangles.copy()
    bad[0] = [bad[0][0], bad[0][0], bad[0][1]]
    with pytest.raises(ValueError):
        geo.Surface3D(s.vertices, bad, check_closed=False)


def test_lens_length_grows_with_corner_angle():
    thetas = [np.pi / 16, np.pi / 8, np.pi / 4, np.pi / 2]
    lengths = [geo.make_corner_curve(t, 256).length for t in thetas]
    for t, length in zip(thetas, lengths):
        phi = t / 2
        assert abs(length - 2 * phi / np.sin(phi)) < 1e-6
    assert np.all(np.diff(lengths) > 0)
