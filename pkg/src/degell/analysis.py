"""Empirical checks of the hypothesis- and conclusion-side inequalities:
negativity conditions, uniqueness, the maximum principle, and Poincare and
Sobolev constants.

Every estimator is pure given (problem, seed); universal quantifications
over the function space are replaced by seeded random discrete pairs plus
the structured truncation pairs the uniqueness argument actually consumes.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg as dla

from .assembly import (
    _drift_field,
    assemble_form,
    assemble_gram,
    assemble_rhs,
    build_space,
    product_rule_gradient,
)
from .errors import (
    DegenerateSamplingError,
    InvalidBallError,
    InvalidInputError,
    InvalidRequestError,
    NoPoincareError,
    PreconditionError,
)
from .fields import ONE, SubunitTuple, ZERO
from .mesh import cell_centroids
from .solver import solve_neumann

_VARIANTS = {
    "cond1_i": ("G", "S", True),
    "cond1_ii": ("H", "R", True),
    "cond2_i": ("G", "S", False),
    "cond2_ii": ("H", "R", False),
}


@dataclass
class InequalityReport:
    name: str
    holds: bool
    constant: float
    witness: object = None
    trials: int = 0
    seed: int = 0
    extras: dict = field(default_factory=dict)

    def to_json_dict(self):
        out = {
            "name": self.name,
            "holds": bool(self.holds),
            "constant": float(self.constant),
            "trials": int(self.trials),
            "seed": int(self.seed),
            "witness": self.witness,
        }
        out.update(
            {
                k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                for k, v in self.extras.items()
            }
        )
        return out


def negativity_integral(problem, space, u_dofs, v_dofs, which):
    """(I, denom) for one pair: I = int F uv + drift(uv), denom = int uv.

    The gradient of the product uses the elementwise product rule, which
    is the discrete form of the subunit product identity.
    """
    coeff_name, tuple_name, _ = _VARIANTS[which]
    coeffs = getattr(problem, coeff_name)
    tup = getattr(problem, tuple_name)
    u_vert = space.vertex_values(np.asarray(u_dofs, dtype=float))
    v_vert = space.vertex_values(np.asarray(v_dofs, dtype=float))
    uv_q, grad_uv = product_rule_gradient(space, u_vert, v_vert)
    pts = space.flat_quad_points()
    E, nq = space.quad_weights.shape
    Fv = problem.F.evaluate(pts).reshape(E, nq)
    integrand = Fv * uv_q
    if len(tup):
        drift = _drift_field(tup, coeffs, pts, (E, nq, space.mesh.dimension))
        integrand = integrand + np.einsum("eqd,eqd->eq", drift, grad_uv)
    return space.integrate(integrand), space.integrate(uv_q)


def check_negativity(problem, space, which, trials=None, seed=None):
    """Sampled negativity condition: sign of int F uv + drift(uv) over pairs
    with uv >= 0.

    Condition (1) variants report the empirical lower bound of I / int uv;
    condition (2) variants check nonnegativity over the boundary-constrained
    space.  Pairs are random (v forced to |v| sign(u) vertexwise) plus
    positive-part truncations (u, (u-k)+).
    """
    if which not in _VARIANTS:
        raise InvalidRequestError(f"unknown negativity variant {which!r}")
    coeff_name, tuple_name, is_cond1 = _VARIANTS[which]
    trials = trials if trials is not None else problem.trials
    seed = seed if seed is not None else problem.seed
    want_bc = "neumann" if is_cond1 else "dirichlet"
    if space.bc != want_bc:
        space = build_space(space.mesh, want_bc)

    coeffs = getattr(problem, coeff_name)
    tup = getattr(problem, tuple_name)
    pts = space.flat_quad_points()
    E, nq = space.quad_weights.shape
    Fv = problem.F.evaluate(pts).reshape(E, nq)
    drift = (
        _drift_field(tup, coeffs, pts, (E, nq, space.mesh.dimension))
        if len(tup)
        else None
    )

    def evaluate(u_dofs, v_dofs):
        u_vert = space.vertex_values(u_dofs)
        v_vert = space.vertex_values(v_dofs)
        uv_q, grad_uv = product_rule_gradient(space, u_vert, v_vert)
        integrand = Fv * uv_q
        if drift is not None:
            integrand = integrand + np.einsum("eqd,eqd->eq", drift, grad_uv)
        return space.integrate(integrand), space.integrate(uv_q)

    rng = np.random.default_rng(seed)
    n = space.dof_count
    pairs = []
    for _ in range(max(int(trials), 1)):
        u = rng.standard_normal(n)
        v = np.abs(rng.standard_normal(n)) * np.sign(u)
        pairs.append((u, v))
        positive = u[u > 0]
        if positive.size:
            for qt in (0.25, 0.5, 0.75):
                kcut = float(np.quantile(positive, qt))
                w = np.maximum(u - kcut, 0.0)
                if np.any(w > 0):
                    pairs.append((u, w))

    best = np.inf
    witness = None
    used = 0
    for u, v in pairs:
        value, denom = evaluate(u, v)
        if is_cond1:
            if denom < 1e-14:
                continue
            ratio = value / denom
        else:
            ratio = value
        used += 1
        if ratio < best:
            best = ratio
            worst_pair = (u, v, value, denom)
    if used == 0:
        raise DegenerateSamplingError(
            "every sampled pair had a vanishing product integral"
        )
    holds = best > 0.0 if is_cond1 else best >= -1e-10
    if not holds:
        u, v, value, denom = worst_pair
        witness = {
            "u": [float(c) for c in u],
            "v": [float(c) for c in v],
            "value": float(value),
            "denominator": float(denom),
        }
    return InequalityReport(
        name=which,
        holds=holds,
        constant=float(best),
        witness=witness,
        trials=used,
        seed=seed,
        extras={"bc": space.bc},
    )


def verify_uniqueness_thm5(problem, space, trials=None, seed=None):
    """Uniqueness under negativity condition (1): the homogeneous problem
    must land in the unique branch with the zero solution."""
    if space.bc != "neumann":
        space = build_space(space.mesh, "neumann")
    rep_i = check_negativity(problem, space, "cond1_i", trials=trials, seed=seed)
    rep_ii = check_negativity(problem, space, "cond1_ii", trials=trials, seed=seed)
    report = {
        "cond1_i_holds": rep_i.holds,
        "cond1_ii_holds": rep_ii.holds,
        "epsilon_i": rep_i.constant,
        "epsilon_ii": rep_ii.constant,
    }
    if not (rep_i.holds or rep_ii.holds):
        report.update({"precondition_met": False, "skipped": True, "holds": None})
        return report
    report["precondition_met"] = True
    homogeneous = replace(problem, f=ZERO, g=[], T=SubunitTuple(fields=[]))
    outcome = solve_neumann(homogeneous, space)
    form = assemble_form(space, problem)
    norm = form.qh1_norm(outcome.solution.coeffs) if outcome.solution is not None else np.inf
    holds = outcome.branch == "unique" and norm <= 1e-10
    report.update(
        {
            "branch": outcome.branch,
            "solution_norm": float(norm),
            "holds": bool(holds),
        }
    )
    if not holds:
        report["violation"] = (
            "homogeneous problem is not uniquely solvable by zero; check the "
            "exponent thresholds t > gain', q > 2 gain'"
        )
    return report


def verify_max_principle(problem, space, u, trials=None, seed=None):
    """sup over the interior of u against sup of u+ on the boundary.

    u must be a discrete weak subsolution: testing the assembled operator
    against every interior hat must come out nonpositive (up to roundoff
    at problem scale).
    """
    mesh = space.mesh
    neumann = space if space.bc == "neumann" else build_space(mesh, "neumann")
    form = assemble_form(neumann, problem)
    u_vert = u.vertex_values() if hasattr(u, "vertex_values") else np.asarray(u, float)
    r = form.A @ u_vert
    boundary = np.array(sorted(mesh.boundary_vertices), dtype=int)
    interior_mask = np.ones(mesh.num_vertices, dtype=bool)
    interior_mask[boundary] = False
    scale = max(1.0, _mat_absmax(form.A) * float(np.max(np.abs(u_vert))))
    tol_sub = 1e-10 * scale
    offenders = np.where(interior_mask & (r > tol_sub))[0]
    if offenders.size:
        raise InvalidInputError(
            f"not a weak subsolution: positive residuals at dofs {offenders.tolist()}",
            offending=offenders.tolist(),
        )
    cond2 = check_negativity(problem, space, "cond2_i", trials=trials, seed=seed)
    interior_sup = float(np.max(u_vert[interior_mask])) if interior_mask.any() else -np.inf
    boundary_sup_plus = float(max(0.0, np.max(u_vert[boundary]))) if boundary.size else 0.0
    tol = 1e-8 * max(1.0, float(np.max(np.abs(u_vert))))
    holds = interior_sup <= boundary_sup_plus + tol
    return {
        "holds": bool(holds),
        "interior_sup": interior_sup,
        "boundary_sup_plus": boundary_sup_plus,
        "tolerance": tol,
        "cond2_i_holds": cond2.holds,
        "cond2_i_constant": cond2.constant,
    }


def _mat_absmax(mat):
    return float(abs(mat).max()) if mat.nnz else 0.0


def lr_norm(space, vert_vals, r):
    """L^r norm of the piecewise-linear interpolant, by quadrature."""
    vals = space.values_at_quad(np.asarray(vert_vals, dtype=float))
    return float(space.integrate(np.abs(vals) ** r) ** (1.0 / r))


def _zero_mean(space, vert_vals, volume_vec, measure):
    mean = float(volume_vec @ space.restrict(vert_vals)) / measure
    return vert_vals - mean


def estimate_global_poincare(space, Q, p=2, q_target=2.0, trials=64, seed=0):
    """Poincare constant with gain on the Neumann space.

    For r = 2 the constant is exact: 1/sqrt(mu2) with mu2 the smallest
    nonzero eigenvalue of the degenerate Gram pencil on zero-mean
    functions.  For r > 2 the returned value is a sampled lower bound.
    """
    if space.bc != "neumann":
        raise PreconditionError("the gain Poincare estimate lives on the Neumann space")
    if p != 2:
        raise InvalidRequestError("only p = 2 is assembled")
    M, Gq = assemble_gram(space, Q)
    vals, vecs = dla.eigh(Gq.toarray(), M.toarray())
    if vals.size < 2:
        raise NoPoincareError("space too small to carry a spectral gap")
    mu2 = float(vals[1])
    if mu2 < 1e-12:
        raise NoPoincareError(
            f"second eigenvalue {mu2:.3e} vanishes: the degenerate matrix "
            "disconnects the domain at the discrete level"
        )
    c5_exact = 1.0 / np.sqrt(mu2)
    extras = {"mu2": mu2, "r": float(q_target), "exact_r2_constant": c5_exact}
    if q_target == 2.0:
        return InequalityReport(
            name="global-poincare",
            holds=True,
            constant=c5_exact,
            trials=0,
            seed=seed,
            extras=extras,
        )

    volume_vec = assemble_rhs(space, ONE)
    measure = float(np.sum(space.mesh.cell_measures))
    rng = np.random.default_rng(seed)
    quotients = []
    candidates = [vecs[:, j] for j in range(1, min(11, vals.size))]
    for _ in range(max(int(trials), 1)):
        candidates.append(rng.standard_normal(space.dof_count))
    for w in candidates:
        w_vert = _zero_mean(space, space.vertex_values(w), volume_vec, measure)
        w_free = space.restrict(w_vert)
        denom = np.sqrt(max(w_free @ (Gq @ w_free), 0.0))
        if denom < 1e-14:
            continue
        quotients.append(lr_norm(space, w_vert, q_target) / denom)
    if not quotients:
        raise DegenerateSamplingError("no trial produced a usable quotient")
    constant = float(np.max(quotients))
    extras.update({"lower_bound": True, "quotients": [float(q) for q in quotients]})
    return InequalityReport(
        name="global-poincare",
        holds=bool(constant <= 1e6),
        constant=constant,
        trials=len(quotients),
        seed=seed,
        extras=extras,
    )


def local_poincare_quotient(space, Q, f_vert, ball, beta=1.0, p=2):
    """Quotient lhs / (r * rhs) for one function and one Euclidean ball.

    Vertex membership defines the discrete ball for the function average;
    the gradient side averages over cells whose centroid lies in the
    dilated ball.  Returns None when the ball captures too few vertices,
    and +inf when the gradient side degenerates under a nonzero lhs.
    """
    center = np.atleast_1d(np.asarray(ball[0], dtype=float))
    radius = float(ball[1])
    mesh = space.mesh
    for d, (lo, hi) in enumerate(mesh.bbox):
        if center[d] - beta * radius < lo - 1e-12 or center[d] + beta * radius > hi + 1e-12:
            raise InvalidBallError(
                f"dilated ball (center {tuple(center)}, "
                f"radius {beta * radius:.4g}) leaves the domain"
            )
    dist = np.linalg.norm(mesh.vertices - center[None, :], axis=1)
    members = dist < radius + 1e-12
    if members.sum() < 2:
        return None
    f_vert = np.asarray(f_vert, dtype=float)
    fbar = float(np.mean(f_vert[members]))
    lhs = float(np.mean(np.abs(f_vert[members] - fbar) ** p) ** (1.0 / p))

    centroids = cell_centroids(mesh)
    cdist = np.linalg.norm(centroids - center[None, :], axis=1)
    cin = cdist < beta * radius + 1e-12
    if not cin.any():
        return None
    grads = space.gradients_of(f_vert)[cin]
    qmats = Q.evaluate(centroids[cin])
    qgrad2 = np.maximum(np.einsum("ed,edc,ec->e", grads, qmats, grads), 0.0)
    weights = mesh.cell_measures[cin]
    rhs = float((np.sum(weights * qgrad2 ** (p / 2.0)) / np.sum(weights)) ** (1.0 / p))
    if rhs < 1e-14:
        return np.inf if lhs > 1e-10 else 0.0
    return lhs / (radius * rhs)


def estimate_local_poincare(space, Q, balls, beta=1.0, trials=32, seed=0, p=2):
    """Sampled constant of the local Poincare inequality over listed balls."""
    rng = np.random.default_rng(seed)
    quotients = []
    witness = None
    holds = True
    for _ in range(max(int(trials), 1)):
        f_vert = rng.standard_normal(space.mesh.num_vertices)
        for ball in balls:
            q = local_poincare_quotient(space, Q, f_vert, ball, beta=beta, p=p)
            if q is None:
                continue
            if not np.isfinite(q) or q > 1e6:
                holds = False
                witness = {
                    "ball": [list(np.atleast_1d(np.asarray(ball[0], float))), float(ball[1])],
                    "f": [float(v) for v in f_vert],
                    "quotient": None if not np.isfinite(q) else float(q),
                }
                continue
            quotients.append(q)
    constant = float(np.max(quotients)) if quotients else 0.0
    return InequalityReport(
        name="local-poincare",
        holds=holds,
        constant=constant,
        witness=witness,
        trials=len(quotients),
        seed=seed,
        extras={"beta": float(beta), "p": float(p)},
    )


def estimate_global_sobolev(space, Q, sigma, trials=64, seed=0):
    """Sampled lower bound for the global Sobolev constant on the
    boundary-constrained space."""
    if space.bc != "dirichlet":
        raise PreconditionError("the global Sobolev estimate needs a Dirichlet space")
    if sigma <= 1.0:
        raise InvalidRequestError("gain sigma must exceed 1")
    M, Gq = assemble_gram(space, Q)
    vals, vecs = dla.eigh(Gq.toarray(), M.toarray())
    if float(vals[0]) < 1e-12:
        raise NoPoincareError(
            "degenerate gradient form has a kernel on the constrained space"
        )
    rng = np.random.default_rng(seed)
    candidates = [vecs[:, j] for j in range(min(10, vals.size))]
    for _ in range(max(int(trials), 1)):
        candidates.append(rng.standard_normal(space.dof_count))
    quotients = []
    for f in candidates:
        denom = np.sqrt(max(f @ (Gq @ f), 0.0))
        if denom < 1e-14:
            continue
        quotients.append(lr_norm(space, space.vertex_values(f), 2.0 * sigma) / denom)
    if not quotients:
        raise DegenerateSamplingError("no trial produced a usable quotient")
    constant = float(np.max(quotients))
    return InequalityReport(
        name="global-sobolev",
        holds=bool(constant <= 1e6),
        constant=constant,
        trials=len(quotients),
        seed=seed,
        extras={"sigma": float(sigma), "lower_bound": True},
    )
