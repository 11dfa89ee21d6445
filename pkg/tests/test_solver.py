import math
import warnings

import numpy as np
import pytest

from degell.assembly import (
    assemble_form,
    assemble_rhs,
    build_space,
    data_norm,
)
from degell.errors import PreconditionError
from degell.problem import make_problem
from degell.solver import (
    find_shift_gamma,
    null_spaces,
    solve_dirichlet,
    solve_neumann,
    solve_shifted,
    stability_report,
)
from degell.spectral import compute_spectrum


def setup_form(problem):
    space = build_space(problem.build_mesh(), problem.bc)
    return space, assemble_form(space, problem)


def test_gamma_pure_neumann_laplacian():
    p = make_problem(bounds=((0.0, math.pi),), resolution=(30,), bc="neumann")
    _, form = setup_form(p)
    gamma = find_shift_gamma(form)
    assert gamma <= 0.25 + 0.25 + 1e-4


def test_gamma_strongly_coercive():
    p = make_problem(bounds=((0.0, 1.0),), resolution=(20,), F="10")
    _, form = setup_form(p)
    gamma = find_shift_gamma(form)
    assert abs(gamma - 0.25) <= 1e-4


def test_gamma_zero_problem():
    p = make_problem(bounds=((0.0, 1.0),), resolution=(8,), P="0", Q="0")
    _, form = setup_form(p)
    np.testing.assert_allclose(find_shift_gamma(form), 0.5 + 1e-6, atol=1e-9)


def test_shifted_identity_on_mass():
    p = make_problem(bounds=((0.0, 1.0),), resolution=(8,), P="0", Q="0")
    space, form = setup_form(p)
    rhs = form.M @ np.ones(space.dof_count)
    u = solve_shifted(form, 1.0, rhs)
    np.testing.assert_allclose(u.coeffs, 1.0, atol=1e-12)


def test_shifted_neumann_helmholtz_oracle():
    # -u'' + u = cos(x) with natural conditions has solution cos(x)/2
    errs = []
    for n in (50, 100):
        p = make_problem(
            bounds=((0.0, math.pi),), resolution=(n,), bc="neumann", f="cos(x)"
        )
        space, form = setup_form(p)
        rhs = assemble_rhs(space, p.f)
        dn = data_norm(space, p.f)
        u = solve_shifted(form, 1.0, rhs, data_norm_value=dn)
        vals = space.values_at_quad(u.vertex_values())
        exact = 0.5 * np.cos(space.flat_quad_points()[:, 0]).reshape(vals.shape)
        errs.append(np.sqrt(space.integrate((vals - exact) ** 2)))
        assert u.info["solmap_bound"] <= u.info["solmap_limit"] + 1e-6
    assert errs[1] <= errs[0] / 3.0  # O(h^2)


def test_shifted_dirichlet_mu_zero_coercive():
    p = make_problem(bounds=((0.0, 1.0),), resolution=(64,), bc="dirichlet", f="1")
    space, form = setup_form(p)
    rhs = assemble_rhs(space, p.f)
    u = solve_shifted(form, 0.0, rhs, data_norm_value=data_norm(space, p.f))
    mid = u.vertex_values()[space.mesh.num_vertices // 2]
    np.testing.assert_allclose(mid, 0.125, atol=1e-10)


def test_shifted_rejects_singular_shift():
    p = make_problem(bounds=((0.0, math.pi),), resolution=(20,), bc="neumann")
    space, form = setup_form(p)
    rhs = assemble_rhs(space, p.f)
    with pytest.raises(PreconditionError):
        solve_shifted(form, 0.0, rhs)


def test_null_spaces_neumann_constant():
    p = make_problem(bounds=((0.0, math.pi),), resolution=(24,), bc="neumann")
    _, form = setup_form(p)
    nbasis, nstar = null_spaces(form)
    assert len(nbasis) == len(nstar) == 1
    w = nbasis[0].coeffs
    assert np.abs(w - w[0]).max() <= 1e-9 * abs(w[0])
    np.testing.assert_allclose(w @ (form.M @ w), 1.0, atol=1e-10)


def test_null_spaces_dirichlet_empty():
    p = make_problem(bounds=((0.0, math.pi),), resolution=(24,), bc="dirichlet")
    _, form = setup_form(p)
    nbasis, nstar = null_spaces(form)
    assert (len(nbasis), len(nstar)) == (0, 0)


def test_null_spaces_drift_problem_empty():
    p = make_problem(
        bounds=((0.0, 1.0),), resolution=(40,), bc="dirichlet", H=["1"], R=[["1"]]
    )
    _, form = setup_form(p)
    nbasis, nstar = null_spaces(form)
    assert (len(nbasis), len(nstar)) == (0, 0)


def galerkin_residual_ok(form, outcome, rhs):
    u = outcome.solution.coeffs
    res = np.linalg.norm(form.A @ u - rhs)
    scale = abs(form.A).max() * np.linalg.norm(u) + np.linalg.norm(rhs)
    return res <= 1e-10 * max(scale, 1e-300)


def test_neumann_compatible_cosine():
    p = make_problem(
        bounds=((0.0, math.pi),), resolution=(80,), bc="neumann", f="cos(x)"
    )
    space, form = setup_form(p)
    out = solve_neumann(p, space, form=form)
    assert out.branch == "alternative"
    assert out.dim_N == out.dim_Nstar == 1
    assert out.compatible
    xs = space.mesh.vertices[:, 0]
    vals = space.values_at_quad(out.solution.vertex_values())
    exact = np.cos(space.flat_quad_points()[:, 0]).reshape(vals.shape)
    assert np.sqrt(space.integrate((vals - exact) ** 2)) <= 1e-3
    # zero-mean normalization reproduces the canonical representative
    ones = assemble_rhs(space, p.F.__class__("1"))
    assert abs(ones @ out.solution.coeffs) <= 1e-9
    rhs = assemble_rhs(space, p.f)
    assert galerkin_residual_ok(form, out, rhs)


def test_neumann_incompatible_constant_load():
    p = make_problem(bounds=((0.0, math.pi),), resolution=(80,), bc="neumann", f="1")
    space, form = setup_form(p)
    out = solve_neumann(p, space, form=form)
    assert out.branch == "alternative"
    assert not out.compatible
    assert out.solution is None
    np.testing.assert_allclose(out.compatibility_residuals, [math.pi], atol=1e-8)


def test_neumann_unique_with_reaction():
    p = make_problem(bounds=((0.0, math.pi),), resolution=(60,), bc="neumann",
                     F="1", f="1")
    space, form = setup_form(p)
    out = solve_neumann(p, space, form=form)
    assert out.branch == "unique"
    np.testing.assert_allclose(out.solution.coeffs, 1.0, atol=1e-8)


def test_dirichlet_unique_parabola():
    p = make_problem(bounds=((0.0, 1.0),), resolution=(64,), bc="dirichlet", f="1")
    space, form = setup_form(p)
    out = solve_dirichlet(p, space, form=form)
    assert out.branch == "unique"
    mid = out.solution.vertex_values()[space.mesh.num_vertices // 2]
    np.testing.assert_allclose(mid, 0.125, atol=1e-10)


def test_dirichlet_resonance_incompatible():
    # subtract the discrete first eigenvalue: alternative branch at resonance
    base = make_problem(bounds=((0.0, math.pi),), resolution=(40,), bc="dirichlet")
    space, form = setup_form(base)
    lam1 = float(compute_spectrum(form, 1).eigenvalues[0])
    p = make_problem(
        bounds=((0.0, math.pi),),
        resolution=(40,),
        bc="dirichlet",
        F=f"0-{lam1!r}",
        f="sin(x)",
    )
    out = solve_dirichlet(p, build_space(p.build_mesh(), "dirichlet"))
    assert out.branch == "alternative"
    assert out.dim_N == out.dim_Nstar == 1
    assert not out.compatible


def test_dirichlet_grushin_unique_bounded():
    p = make_problem(
        domain_kind="rect",
        bounds=((-1.0, 1.0), (-1.0, 1.0)),
        resolution=(10, 10),
        bc="dirichlet",
        P={"11": "1", "22": "x^2"},
        Q={"11": "1", "22": "x^2"},
        f="1",
    )
    space, form = setup_form(p)
    out = solve_dirichlet(p, space, form=form)
    assert out.branch == "unique"
    assert np.abs(out.solution.coeffs).max() < 10.0
    gamma = find_shift_gamma(form)  # coercivity machinery runs clean
    assert gamma > 0


def test_fredholm_dichotomy_randomized():
    rng = np.random.default_rng(2024)
    for trial in range(10):
        dim = int(rng.integers(1, 3))
        bc = "neumann" if rng.random() < 0.5 else "dirichlet"
        fconst = float(rng.uniform(-0.5, 1.0))
        kwargs = dict(F=repr(fconst), f="sin(x)")
        if dim == 1:
            p = make_problem(bounds=((0.0, 1.0),), resolution=(12,), bc=bc, **kwargs)
        else:
            p = make_problem(
                domain_kind="rect",
                bounds=((0.0, 1.0), (0.0, 1.0)),
                resolution=(4, 4),
                bc=bc,
                **kwargs,
            )
        space, form = setup_form(p)
        out = (solve_neumann if bc == "neumann" else solve_dirichlet)(
            p, space, form=form
        )
        assert out.branch in ("unique", "alternative")
        if out.branch == "unique":
            assert out.dim_N == out.dim_Nstar == 0
            assert out.solution is not None
        else:
            assert out.dim_N == out.dim_Nstar >= 1
            assert (out.solution is not None) == bool(out.compatible)


def test_stability_shifted_bound():
    p = make_problem(
        bounds=((0.0, math.pi),), resolution=(60,), bc="neumann", f="cos(x)"
    )
    space, form = setup_form(p)
    rhs = assemble_rhs(space, p.f)
    u = solve_shifted(form, 1.0, rhs, data_norm_value=data_norm(space, p.f))
    assert u.info["solmap_bound"] <= 4.0 / form.c1_hat + 1e-6


def test_stability_zero_data():
    p = make_problem(bounds=((0.0, 1.0),), resolution=(10,), bc="dirichlet", f="0")
    space, form = setup_form(p)
    out = solve_dirichlet(p, space, form=form)
    rep = stability_report(out, p)
    assert rep["lhs"] == rep["rhs"] == 0.0
    assert rep["holds"]


def test_stability_two_mesh_consistency():
    bounds = []
    for n in (100, 200):
        p = make_problem(
            bounds=((0.0, math.pi),), resolution=(n,), bc="neumann", f="cos(x)"
        )
        space, form = setup_form(p)
        out = solve_neumann(p, space, form=form)
        rep = stability_report(out, p)
        assert np.isfinite(rep["bound_C8"])
        bounds.append(rep["bound_C8"])
    assert abs(bounds[1] - bounds[0]) <= 0.1 * abs(bounds[0])
