import json
import math

import numpy as np
import pytest

from degell.errors import InvalidDomainError, InvalidResolutionError
from degell.mesh import build_interval_mesh, build_rect_mesh, domain_measure


def test_interval_unit_partition():
    mesh = build_interval_mesh(0.0, 1.0, 2)
    assert mesh.vertices[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert mesh.num_cells == 2
    np.testing.assert_allclose(mesh.cell_measures, 0.5)
    assert mesh.boundary_vertices == {0, 2}


def test_interval_pi_partition():
    mesh = build_interval_mesh(0.0, math.pi, 4)
    np.testing.assert_allclose(mesh.cell_measures, math.pi / 4.0)


def test_interval_reversed_endpoints():
    with pytest.raises(InvalidDomainError):
        build_interval_mesh(1.0, 0.0, 2)
    with pytest.raises(InvalidResolutionError):
        build_interval_mesh(0.0, 1.0, 0)


def test_rect_single_split():
    mesh = build_rect_mesh((0, 1), (0, 1), 1, 1)
    assert mesh.num_cells == 2
    np.testing.assert_allclose(mesh.cell_measures, 0.5)
    assert mesh.boundary_vertices == {0, 1, 2, 3}


def test_rect_counts():
    mesh = build_rect_mesh((0, 1), (0, 1), 2, 2)
    assert mesh.num_cells == 8
    assert mesh.num_vertices == 9
    assert len(mesh.boundary_vertices) == 8


def test_rect_total_measure():
    mesh = build_rect_mesh((-1, 1), (-1, 1), 4, 4)
    assert abs(domain_measure(mesh) - 4.0) <= 1e-12 * 4.0


def test_rect_empty_interval():
    with pytest.raises(InvalidDomainError):
        build_rect_mesh((0, 0), (0, 1), 2, 2)


@pytest.mark.parametrize(
    "mesh,measure",
    [
        (build_interval_mesh(0.0, math.pi, 7), math.pi),
        (build_rect_mesh((0, 2), (1, 4), 3, 5), 6.0),
    ],
)
def test_measure_sums(mesh, measure):
    assert abs(domain_measure(mesh) - measure) <= 1e-12 * measure
    assert np.all(mesh.cell_measures > 0)


def test_vertex_cell_incidence():
    mesh = build_rect_mesh((0, 1), (0, 1), 3, 3)
    counts = np.zeros(mesh.num_vertices, dtype=int)
    for cell in mesh.cells:
        counts[list(cell)] += 1
    for v in range(mesh.num_vertices):
        if v in mesh.boundary_vertices:
            assert counts[v] >= 1
        else:
            assert counts[v] >= 3


def test_json_export_roundtrip():
    mesh = build_interval_mesh(0.0, 1.0, 3)
    doc = json.loads(mesh.to_json())
    assert doc["dimension"] == 1
    assert doc["boundary_vertices"] == [0, 3]
    assert len(doc["vertices"]) == 4
    assert len(doc["cells"]) == 3
