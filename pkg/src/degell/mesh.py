"""Interval and structured-triangle meshes with exact boundary identification."""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDomainError, InvalidResolutionError


@dataclass(frozen=True)
class Mesh:
    """Simplicial mesh of an interval or axis-aligned rectangle.

    vertices has shape (V, dim), cells (E, dim+1) with vertex indices,
    cell_measures (E,) strictly positive.  Instances are immutable.
    """

    dimension: int
    vertices: np.ndarray
    cells: np.ndarray
    boundary_vertices: frozenset
    cell_measures: np.ndarray
    bbox: tuple = field(default=None)

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_cells(self):
        return self.cells.shape[0]

    def to_json(self):
        return json.dumps(
            {
                "dimension": self.dimension,
                "vertices": self.vertices.tolist(),
                "cells": self.cells.tolist(),
                "boundary_vertices": sorted(self.boundary_vertices),
            },
            sort_keys=True,
        )


def build_interval_mesh(a, b, n):
    """Uniform mesh of (a, b) with n cells and n+1 vertices."""
    if not (a < b):
        raise InvalidDomainError(f"interval endpoints must satisfy a < b, got ({a}, {b})")
    if n < 1:
        raise InvalidResolutionError(f"need at least one cell, got n={n}")
    xs = np.linspace(a, b, n + 1)
    vertices = xs.reshape(-1, 1)
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    measures = np.diff(xs)
    return Mesh(
        dimension=1,
        vertices=vertices,
        cells=cells,
        boundary_vertices=frozenset({0, n}),
        cell_measures=measures,
        bbox=((a, b),),
    )


def build_rect_mesh(x_range, y_range, nx, ny):
    """Structured triangulation of x_range x y_range.

    Each grid rectangle is split along its lower-left to upper-right
    diagonal, giving 2*nx*ny triangles with a fixed orientation.
    """
    x0, x1 = x_range
    y0, y1 = y_range
    if not (x0 < x1 and y0 < y1):
        raise InvalidDomainError(f"empty rectangle ({x_range}, {y_range})")
    if nx < 1 or ny < 1:
        raise InvalidResolutionError(f"need positive resolution, got ({nx}, {ny})")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(ix, iy):
        return iy * (nx + 1) + ix

    cells = []
    for iy in range(ny):
        for ix in range(nx):
            ll = vid(ix, iy)
            lr = vid(ix + 1, iy)
            ul = vid(ix, iy + 1)
            ur = vid(ix + 1, iy + 1)
            cells.append((ll, lr, ur))
            cells.append((ll, ur, ul))
    cells = np.asarray(cells, dtype=int)

    boundary = set()
    for iy in range(ny + 1):
        for ix in range(nx + 1):
            if ix in (0, nx) or iy in (0, ny):
                boundary.add(vid(ix, iy))

    v = vertices
    e0 = v[cells[:, 1]] - v[cells[:, 0]]
    e1 = v[cells[:, 2]] - v[cells[:, 0]]
    measures = 0.5 * np.abs(e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0])
    return Mesh(
        dimension=2,
        vertices=vertices,
        cells=cells,
        boundary_vertices=frozenset(boundary),
        cell_measures=measures,
        bbox=((x0, x1), (y0, y1)),
    )


def domain_measure(mesh):
    return float(np.sum(mesh.cell_measures))


def cell_centroids(mesh):
    return mesh.vertices[mesh.cells].mean(axis=1)
