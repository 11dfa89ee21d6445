"""P1 Galerkin assembly for the degenerate bilinear form.

The discrete space uses piecewise-linear hats, so gradients are per-cell
constants and every quadrature rule here (3-point Gauss on segments,
mid-edge rule on triangles) integrates products of two hats exactly.
Degenerate matrices are never factored: all norms go through the
quadratic form <grad u, Q grad u>.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .errors import InvalidDataError, SubunitWarning, TransposeMismatchError
from .fields import (
    check_subunit,
    estimate_comparability,
    eval_vector_field,
    halton_points,
)

_GAUSS3_T = np.array([0.5 * (1.0 - np.sqrt(0.6)), 0.5, 0.5 * (1.0 + np.sqrt(0.6))])
_GAUSS3_W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


@dataclass
class DiscreteSpace:
    """Mesh plus boundary handling: the discrete degenerate Sobolev space."""

    mesh: object
    bc: str
    dof_count: int
    dof_map: np.ndarray
    free_vertices: np.ndarray
    quad_points: np.ndarray   # (E, nq, dim)
    quad_weights: np.ndarray  # (E, nq)
    basis_at_quad: np.ndarray  # (nq, nloc)
    grad_basis: np.ndarray    # (E, nloc, dim)

    @property
    def nloc(self):
        return self.mesh.cells.shape[1]

    @property
    def nq(self):
        return self.quad_points.shape[1]

    def vertex_values(self, coeffs):
        """Expand a dof vector to all vertices (constrained ones are zero)."""
        full = np.zeros(self.mesh.num_vertices)
        full[self.free_vertices] = coeffs
        return full

    def restrict(self, vertex_vals):
        return np.asarray(vertex_vals)[self.free_vertices]

    def values_at_quad(self, vertex_vals):
        local = np.asarray(vertex_vals)[self.mesh.cells]  # (E, nloc)
        return local @ self.basis_at_quad.T  # (E, nq)

    def gradients_of(self, vertex_vals):
        local = np.asarray(vertex_vals)[self.mesh.cells]
        return np.einsum("el,eld->ed", local, self.grad_basis)

    def integrate(self, cellwise_vals):
        return float(np.sum(self.quad_weights * cellwise_vals))

    def flat_quad_points(self):
        return self.quad_points.reshape(-1, self.mesh.dimension)

    def interpolate(self, expr):
        """Vertex values of a coefficient expression."""
        return expr.evaluate(self.mesh.vertices)


@dataclass
class WeakSolution:
    """Coefficient vector paired with its per-cell gradient field."""

    coeffs: np.ndarray
    gradient: np.ndarray
    space: DiscreteSpace
    info: dict = field(default_factory=dict)

    def vertex_values(self):
        return self.space.vertex_values(self.coeffs)


def make_solution(space, coeffs, info=None):
    coeffs = np.asarray(coeffs, dtype=float)
    grad = space.gradients_of(space.vertex_values(coeffs))
    return WeakSolution(coeffs=coeffs, gradient=grad, space=space, info=info or {})


def build_space(mesh, bc):
    """Discrete space on a mesh; Dirichlet constrains all boundary vertices."""
    bc = bc.lower()
    if bc not in ("neumann", "dirichlet"):
        raise ValueError(f"unknown boundary kind {bc!r}")
    V = mesh.num_vertices
    constrained = np.zeros(V, dtype=bool)
    if bc == "dirichlet":
        constrained[sorted(mesh.boundary_vertices)] = True
    dof_map = np.full(V, -1, dtype=int)
    free = np.where(~constrained)[0]
    dof_map[free] = np.arange(free.size)

    verts = mesh.vertices
    cells = mesh.cells
    if mesh.dimension == 1:
        x0 = verts[cells[:, 0], 0]
        h = verts[cells[:, 1], 0] - x0
        qp = (x0[:, None] + np.outer(h, _GAUSS3_T))[:, :, None]
        qw = np.outer(h, _GAUSS3_W)
        basis = np.column_stack([1.0 - _GAUSS3_T, _GAUSS3_T])
        grad = np.empty((mesh.num_cells, 2, 1))
        grad[:, 0, 0] = -1.0 / h
        grad[:, 1, 0] = 1.0 / h
    else:
        p0, p1, p2 = verts[cells[:, 0]], verts[cells[:, 1]], verts[cells[:, 2]]
        qp = np.stack([(p0 + p1) / 2.0, (p1 + p2) / 2.0, (p0 + p2) / 2.0], axis=1)
        qw = np.repeat(mesh.cell_measures[:, None] / 3.0, 3, axis=1)
        basis = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        B = np.stack([p1 - p0, p2 - p0], axis=2)  # columns are edge vectors
        Binv = np.linalg.inv(B)
        grad = np.empty((mesh.num_cells, 3, 2))
        grad[:, 1, :] = Binv[:, 0, :]
        grad[:, 2, :] = Binv[:, 1, :]
        grad[:, 0, :] = -grad[:, 1, :] - grad[:, 2, :]

    return DiscreteSpace(
        mesh=mesh,
        bc=bc,
        dof_count=int(free.size),
        dof_map=dof_map,
        free_vertices=free,
        quad_points=qp,
        quad_weights=qw,
        basis_at_quad=basis,
        grad_basis=grad,
    )


@dataclass
class AssembledForm:
    """Sparse operator, mass, and degenerate-gradient Gram matrices."""

    A: sparse.csr_matrix
    M: sparse.csr_matrix
    Gq: sparse.csr_matrix
    c1_hat: float
    C1_hat: float
    space: DiscreteSpace
    problem: object

    def qh1_norm(self, vec):
        vec = np.asarray(vec)
        return float(np.sqrt(max(vec @ (self.M @ vec) + vec @ (self.Gq @ vec), 0.0)))

    def l2_norm(self, vec):
        vec = np.asarray(vec)
        return float(np.sqrt(max(vec @ (self.M @ vec), 0.0)))

    def is_self_adjoint(self, tol=1e-12):
        diff = abs(self.A - self.A.T)
        scale = abs(self.A).max() if self.A.nnz else 0.0
        return diff.max() <= tol * max(scale, 1e-300) if diff.nnz else True


def _scatter(space, blocks):
    """Accumulate (nloc x nloc) cell blocks into a free-dof csr matrix."""
    cells = space.mesh.cells
    nloc = space.nloc
    rows, cols, vals = [], [], []
    for i in range(nloc):
        for j in range(nloc):
            rows.append(cells[:, i])
            cols.append(cells[:, j])
            vals.append(blocks[i][j])
    V = space.mesh.num_vertices
    full = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(V, V),
    ).tocsr()
    free = space.free_vertices
    return full[free][:, free].tocsr()


def _drift_field(tuple_exprs, coeff_exprs, pts, shape):
    """Pointwise vector Sum_k coeff_k(x) W_k(x), reshaped to (E, nq, dim)."""
    E, nq, dim = shape
    acc = np.zeros((E * nq, dim))
    for coeff, W in zip(coeff_exprs, tuple_exprs):
        acc += coeff.evaluate(pts)[:, None] * eval_vector_field(W, pts)
    return acc.reshape(E, nq, dim)


def assemble_gram(space, Q):
    """Mass matrix and degenerate-gradient Gram <grad u, Q grad v>."""
    pts = space.flat_quad_points()
    E, nq = space.quad_weights.shape
    dim = space.mesh.dimension
    Qv = Q.evaluate(pts).reshape(E, nq, dim, dim)
    w = space.quad_weights
    phi = space.basis_at_quad
    grad = space.grad_basis
    nloc = space.nloc
    mass_blocks = [[None] * nloc for _ in range(nloc)]
    gram_blocks = [[None] * nloc for _ in range(nloc)]
    for i in range(nloc):
        for j in range(nloc):
            mass_blocks[i][j] = np.einsum("eq,q,q->e", w, phi[:, i], phi[:, j])
            gram_blocks[i][j] = np.einsum(
                "eq,ed,eqdc,ec->e", w, grad[:, i, :], Qv, grad[:, j, :]
            )
    return _scatter(space, mass_blocks), _scatter(space, gram_blocks)


def assemble_form(space, problem):
    """Assemble A[i][j] = L(phi_j, phi_i) together with mass and Gram matrices.

    R and S members failing the subunit check trigger a warning, not an
    abort; the comparability constants are estimated on the quadrature
    nodes plus a seeded low-discrepancy cloud.
    """
    pts = space.flat_quad_points()
    samples = np.vstack(
        [pts, halton_points(space.mesh.bbox, 256, seed=problem.seed)]
    )
    for label, tup in (("R", problem.R), ("S", problem.S)):
        for k, W in enumerate(tup):
            rep = check_subunit(W, problem.Q, samples)
            if not rep.ok:
                warnings.warn(
                    f"{label}[{k}] is not subunit (worst ratio {rep.worst_ratio:.4g} "
                    f"at {rep.witness[0]})",
                    SubunitWarning,
                )
    c1_hat, C1_hat = estimate_comparability(problem.P, problem.Q, samples)

    E, nq = space.quad_weights.shape
    dim = space.mesh.dimension
    Pv = problem.P.evaluate(pts).reshape(E, nq, dim, dim)
    Qv = problem.Q.evaluate(pts).reshape(E, nq, dim, dim)
    Fv = problem.F.evaluate(pts).reshape(E, nq)
    hr = _drift_field(problem.R, problem.H, pts, (E, nq, dim))
    gs = _drift_field(problem.S, problem.G, pts, (E, nq, dim))

    w = space.quad_weights
    phi = space.basis_at_quad
    grad = space.grad_basis
    nloc = space.nloc
    a_blocks = [[None] * nloc for _ in range(nloc)]
    m_blocks = [[None] * nloc for _ in range(nloc)]
    g_blocks = [[None] * nloc for _ in range(nloc)]
    for i in range(nloc):
        gi = grad[:, i, :]
        for j in range(nloc):
            gj = grad[:, j, :]
            stiff = np.einsum("eq,ed,eqdc,ec->e", w, gi, Pv, gj)
            drift_hr = np.einsum("eq,q,eqd,ed->e", w, phi[:, i], hr, gj)
            drift_gs = np.einsum("eq,eqd,ed,q->e", w, gs, gi, phi[:, j])
            react = np.einsum("eq,eq,q,q->e", w, Fv, phi[:, i], phi[:, j])
            a_blocks[i][j] = stiff + drift_hr + drift_gs + react
            m_blocks[i][j] = np.einsum("eq,q,q->e", w, phi[:, i], phi[:, j])
            g_blocks[i][j] = np.einsum("eq,ed,eqdc,ec->e", w, gi, Qv, gj)

    return AssembledForm(
        A=_scatter(space, a_blocks),
        M=_scatter(space, m_blocks),
        Gq=_scatter(space, g_blocks),
        c1_hat=c1_hat,
        C1_hat=C1_hat,
        space=space,
        problem=problem,
    )


def assemble_adjoint(space, problem, tol=1e-9):
    """Assemble the adjoint operator (H,R and G,S roles exchanged).

    The result is independently assembled and then verified against the
    transpose of the direct assembly; a mismatch beyond tol signals an
    assembly bug rather than a property of the problem.
    """
    adj_problem = replace(problem, H=problem.G, R=problem.S, G=problem.H, S=problem.R)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SubunitWarning)
        adj = assemble_form(space, adj_problem)
        direct = assemble_form(space, problem)
    diff = abs(adj.A - direct.A.T)
    scale = max(abs(direct.A).max() if direct.A.nnz else 0.0, 1e-300)
    mismatch = diff.max() / scale if diff.nnz else 0.0
    if mismatch > tol:
        raise TransposeMismatchError(
            f"adjoint assembly deviates from transpose by {mismatch:.3e} relative"
        )
    return adj


def assemble_rhs(space, f, T=None, g=None):
    """Load vector b[i] = integral of f phi_i + sum_k g_k (T_k phi_i)."""
    T = list(T) if T is not None else []
    g = list(g) if g is not None else []
    if len(T) != len(g):
        raise InvalidDataError(f"|T|={len(T)} does not match |g|={len(g)}")
    pts = space.flat_quad_points()
    E, nq = space.quad_weights.shape
    dim = space.mesh.dimension
    fv = f.evaluate(pts).reshape(E, nq)
    gt = _drift_field(T, g, pts, (E, nq, dim))
    w = space.quad_weights
    phi = space.basis_at_quad
    grad = space.grad_basis
    b_full = np.zeros(space.mesh.num_vertices)
    for i in range(space.nloc):
        vals = np.einsum("eq,eq,q->e", w, fv, phi[:, i])
        vals += np.einsum("eq,eqd,ed->e", w, gt, grad[:, i, :])
        np.add.at(b_full, space.mesh.cells[:, i], vals)
    return b_full[space.free_vertices]


def data_norm(space, f, T=None, g=None):
    """||f||_L2 + sqrt(K) ||  |g| ||_L2, evaluated by quadrature."""
    pts = space.flat_quad_points()
    E, nq = space.quad_weights.shape
    fv = f.evaluate(pts).reshape(E, nq)
    norm = np.sqrt(max(space.integrate(fv * fv), 0.0))
    g = list(g) if g is not None else []
    if g:
        mag2 = np.zeros((E, nq))
        for gk in g:
            vals = gk.evaluate(pts).reshape(E, nq)
            mag2 += vals * vals
        norm += np.sqrt(len(g)) * np.sqrt(max(space.integrate(mag2), 0.0))
    return float(norm)


def coefficient_norm(space, exprs, exponent, vector=False):
    """L^p norm of a scalar coefficient or of |vector coefficient|."""
    pts = space.flat_quad_points()
    E, nq = space.quad_weights.shape
    if vector:
        mag2 = np.zeros((E, nq))
        for e in exprs:
            vals = e.evaluate(pts).reshape(E, nq)
            mag2 += vals * vals
        mag = np.sqrt(mag2)
    else:
        mag = np.abs(exprs.evaluate(pts).reshape(E, nq))
    return float(space.integrate(mag**exponent) ** (1.0 / exponent))


def subunit_derivative(space, W, u):
    """Values of <W, grad u> at quadrature nodes, shape (E, nq)."""
    pts = space.flat_quad_points()
    E, nq = space.quad_weights.shape
    wv = eval_vector_field(W, pts).reshape(E, nq, -1)
    return np.einsum("eqd,ed->eq", wv, u.gradient)


def l2_norm_of_values(space, cellwise_vals):
    return float(np.sqrt(max(space.integrate(cellwise_vals**2), 0.0)))


def product_rule_gradient(space, u_vert, v_vert):
    """(uv, grad(uv)) at quadrature nodes with grad(uv) = u grad v + v grad u."""
    u_q = space.values_at_quad(u_vert)
    v_q = space.values_at_quad(v_vert)
    gu = space.gradients_of(u_vert)
    gv = space.gradients_of(v_vert)
    grad_uv = u_q[:, :, None] * gv[:, None, :] + v_q[:, :, None] * gu[:, None, :]
    return u_q * v_q, grad_uv


def check_boundedness(form, trials=200, seed=0, c4=None):
    """Empirical continuity constant of the form, and the closed formula
    when a global Poincare constant estimate is supplied."""
    rng = np.random.default_rng(seed)
    n = form.A.shape[0]
    best = 0.0
    for _ in range(max(int(trials), 1)):
        u = rng.standard_normal(n)
        v = rng.standard_normal(n)
        nu, nv = form.qh1_norm(u), form.qh1_norm(v)
        if nu < 1e-300 or nv < 1e-300:
            continue
        best = max(best, abs(u @ (form.A @ v)) / (nu * nv))
    result = {"C6_empirical": float(best), "C6_formula": "unavailable"}
    if c4 is not None:
        p = form.problem
        conj = p.gain / (p.gain - 1.0)
        space = form.space
        norm_f = coefficient_norm(space, p.F, conj)
        norm_h = coefficient_norm(space, p.H, 2.0 * conj, vector=True) if p.H else 0.0
        norm_g = coefficient_norm(space, p.G, 2.0 * conj, vector=True) if p.G else 0.0
        ncount = max(len(p.H), len(p.G), 1)
        result["C6_formula"] = float(
            form.C1_hat**2
            + c4 * np.sqrt(ncount) * (norm_g + norm_h)
            + c4**2 * norm_f
        )
    return result


def check_coercivity(form, trials=200, seed=0):
    """Empirical Garding constant: smallest shift restoring coercivity."""
    rng = np.random.default_rng(seed)
    n = form.A.shape[0]
    worst = 0.0
    warning = None
    for _ in range(max(int(trials), 1)):
        u = rng.standard_normal(n)
        l2sq = u @ (form.M @ u)
        if l2sq < 1e-14:
            warning = "trial vector with vanishing L2 norm skipped"
            continue
        qh1sq = l2sq + u @ (form.Gq @ u)
        deficit = (form.c1_hat / 4.0) * qh1sq - u @ (form.A @ u)
        worst = max(worst, deficit / l2sq)
    out = {"C7_empirical": float(max(worst, 0.0)), "holds": True}
    if warning:
        out["warning"] = warning
    return out


def export_coo(matrix):
    """Plain-text coordinate dump: '<row> <col> <value>' per line, 0-indexed."""
    coo = sparse.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    lines = [
        f"{int(coo.row[k])} {int(coo.col[k])} {float(coo.data[k])!r}" for k in order
    ]
    return "\n".join(lines) + ("\n" if lines else "")
