"""Eigenvalue computations: direct generalized solves and the variational
minimum recursion, plus the structural checks tying the two together."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as dla
from scipy.sparse import linalg as spla

from .assembly import assemble_form, assemble_rhs, build_space, make_solution
from .errors import InvalidRequestError, PreconditionError
from .fields import ONE, estimate_comparability
from .solver import find_shift_gamma

_DENSE_LIMIT = 2000


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenfunctions: list
    self_adjoint: bool
    diagnostics: dict
    multiplicities: list
    form: object = None

    def to_json_dict(self):
        evs = []
        for lam in self.eigenvalues:
            if np.iscomplexobj(lam) and abs(np.imag(lam)) > 0:
                evs.append({"re": float(np.real(lam)), "im": float(np.imag(lam))})
            else:
                evs.append(float(np.real(lam)))
        return {
            "eigenvalues": evs,
            "multiplicities": self.multiplicities,
            "self_adjoint": self.self_adjoint,
            "diagnostics": {
                k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v))
                for k, v in self.diagnostics.items()
            },
        }


def _group_multiplicities(values, tol=1e-8):
    groups = []
    for lam in values:
        lam = float(np.real(lam))
        if groups and abs(lam - groups[-1][0]) <= tol * max(1.0, abs(lam)):
            groups[-1][1] += 1
        else:
            groups.append([lam, 1])
    return [{"value": g[0], "multiplicity": g[1]} for g in groups]


def _sign_fix(vec, weight=None):
    """Deterministic orientation: integral positive when a weight is given,
    otherwise the entry of largest magnitude is positive."""
    if weight is not None:
        s = float(weight @ vec)
        if abs(s) > 1e-14:
            return vec if s >= 0 else -vec
    idx = int(np.argmax(np.abs(vec)))
    return vec if vec[idx] >= 0 else -vec


def _sa_diagnostics(form, vals, vecs):
    offmax = 0.0
    k = vecs.shape[1]
    gram = vecs.T @ (form.M @ vecs)
    if k > 1:
        offmax = float(np.max(np.abs(gram - np.diag(np.diag(gram)))))
    full = form.space.vertex_values(vecs[:, 0])
    return {
        "orthogonality_max": offmax,
        "first_eigfn_min": float(np.min(full)),
        "monotone": bool(np.all(np.diff(np.real(vals)) >= -1e-10)),
    }


def compute_spectrum(form, k):
    """Smallest-k eigenpairs of A u = lambda M u.

    Self-adjoint forms go through the symmetric generalized solver;
    otherwise the full nonsymmetric spectrum is computed and reported with
    real parts ascending (complex pairs kept as such).
    """
    n = form.A.shape[0]
    if k > n:
        raise InvalidRequestError(f"requested {k} eigenpairs from a {n}-dof space")
    if k < 1:
        raise InvalidRequestError("need k >= 1")
    sa = form.is_self_adjoint()
    volume = assemble_rhs(form.space, ONE)
    if sa:
        if n <= _DENSE_LIMIT:
            A = 0.5 * (form.A + form.A.T).toarray()
            M = form.M.toarray()
            vals, vecs = dla.eigh(A, M)
            vals, vecs = vals[:k], vecs[:, :k]
        else:
            gamma = find_shift_gamma(form)
            vals, vecs = spla.eigsh(form.A, k=k, M=form.M, sigma=-gamma, which="LM")
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
        for j in range(vecs.shape[1]):
            nrm = np.sqrt(vecs[:, j] @ (form.M @ vecs[:, j]))
            vecs[:, j] /= nrm
            vecs[:, j] = _sign_fix(vecs[:, j], volume if j == 0 else None)
        diags = _sa_diagnostics(form, vals, vecs)
    else:
        if n <= _DENSE_LIMIT:
            vals, vecs = dla.eig(form.A.toarray(), form.M.toarray())
        else:
            gamma = find_shift_gamma(form)
            vals, vecs = spla.eigs(form.A, k=k, M=form.M, sigma=-gamma, which="LM")
        order = np.lexsort((np.imag(vals), np.real(vals)))
        vals, vecs = vals[order][:k], vecs[:, order][:, :k]
        realish = np.abs(np.imag(vals)) <= 1e-10 * (1.0 + np.abs(vals))
        if realish.all():
            vals = np.real(vals)
        vecs = np.real(vecs).astype(float)
        for j in range(vecs.shape[1]):
            nrm = np.sqrt(max(vecs[:, j] @ (form.M @ vecs[:, j]), 1e-300))
            vecs[:, j] = _sign_fix(vecs[:, j] / nrm)
        diags = {
            "orthogonality_max": np.nan,
            "first_eigfn_min": float(np.min(form.space.vertex_values(vecs[:, 0]))),
            "monotone": bool(np.all(np.diff(np.real(vals)) >= -1e-10)),
        }

    funcs = [make_solution(form.space, vecs[:, j]) for j in range(vecs.shape[1])]
    return SpectrumResult(
        eigenvalues=vals,
        eigenfunctions=funcs,
        self_adjoint=sa,
        diagnostics=diags,
        multiplicities=_group_multiplicities(vals),
        form=form,
    )


def rayleigh_recursion(form, k, tol=1e-11, maxit=5000):
    """Variational eigenvalue recursion by deflated inverse iteration.

    Each eigenvalue minimizes u'Au/u'Mu over the M-orthogonal complement
    of the previously found eigenvectors; the iteration uses the shifted
    factorization (A + gamma M)^-1 M, an independent route from the direct
    generalized solver.
    """
    if not form.is_self_adjoint():
        raise PreconditionError("the Rayleigh recursion needs a self-adjoint form")
    n = form.A.shape[0]
    if k > n:
        raise InvalidRequestError(f"requested {k} eigenpairs from a {n}-dof space")
    gamma = find_shift_gamma(form)
    lu = spla.splu((form.A + gamma * form.M).tocsc())
    volume = assemble_rhs(form.space, ONE)
    scaleA = float(abs(form.A).max()) if form.A.nnz else 0.0
    scaleM = float(abs(form.M).max())

    found = []
    vals = []
    converged = True
    for j in range(k):
        rng = np.random.default_rng(form.problem.seed + 11 * j)
        x = rng.standard_normal(n)
        x = _deflate(x, found, form.M)
        x /= np.sqrt(max(x @ (form.M @ x), 1e-300))
        rho_prev = np.inf
        for _ in range(maxit):
            x = lu.solve(form.M @ x)
            x = _deflate(x, found, form.M)
            nrm = np.sqrt(max(x @ (form.M @ x), 1e-300))
            x /= nrm
            rho = float(x @ (form.A @ x))
            res = np.linalg.norm(form.A @ x - rho * (form.M @ x))
            if res <= tol * (scaleA + abs(rho) * scaleM) * np.linalg.norm(x):
                break
            if abs(rho - rho_prev) <= 1e-15 * max(1.0, abs(rho)):
                break
            rho_prev = rho
        else:
            converged = False
        x = _sign_fix(x, volume if j == 0 else None)
        found.append(x)
        vals.append(float(x @ (form.A @ x)))

    vecs = np.column_stack(found)
    diags = _sa_diagnostics(form, np.array(vals), vecs)
    diags["converged"] = converged

    funcs = [make_solution(form.space, v) for v in found]
    return SpectrumResult(
        eigenvalues=np.array(vals),
        eigenfunctions=funcs,
        self_adjoint=True,
        diagnostics=diags,
        multiplicities=_group_multiplicities(vals),
        form=form,
    )


def _deflate(x, found, M):
    for u in found:
        x = x - (u @ (M @ x)) * u
    return x


def verify_spectral_claims(result, negativity_holds=None):
    """Report on ordering, orthogonality, and positivity of the spectrum."""
    form = result.form
    vals = np.real(np.asarray(result.eigenvalues, dtype=complex))
    report = {
        "monotone": bool(np.all(np.diff(vals) >= -1e-10)),
        "self_adjoint": result.self_adjoint,
    }
    if result.self_adjoint and len(result.eigenfunctions) > 1:
        vecs = np.column_stack([u.coeffs for u in result.eigenfunctions])
        gram = vecs.T @ (form.M @ vecs)
        off = np.abs(gram - np.diag(np.diag(gram)))
        report["l2_orthogonality_max"] = float(off.max())
        report["l2_orthogonal"] = bool(off.max() <= 1e-8)
    if negativity_holds is not None:
        report["negativity_holds"] = bool(negativity_holds)
        if negativity_holds:
            report["min_eigenvalue"] = float(vals.min())
            report["min_eigenvalue_positive"] = bool(vals.min() > 0.0)
    samples = form.space.flat_quad_points()
    lo, hi = estimate_comparability(form.problem.P, form.problem.Q, samples)
    p_equals_q = abs(lo - 1.0) <= 1e-12 and abs(hi - 1.0) <= 1e-12
    report["p_equals_q"] = p_equals_q
    if p_equals_q and result.self_adjoint and len(result.eigenfunctions) > 1:
        vecs = np.column_stack([u.coeffs for u in result.eigenfunctions])
        gram = vecs.T @ ((form.M + form.Gq) @ vecs)
        off = np.abs(gram - np.diag(np.diag(gram)))
        report["qh1_orthogonality_max"] = float(off.max())
        report["qh1_orthogonal"] = bool(off.max() <= 1e-8)
    return report


def eigenvalue_convergence(problem, resolutions, k):
    """Eigenvalues across mesh resolutions with Richardson rate estimates."""
    if len(resolutions) < 3:
        raise InvalidRequestError("need at least three resolutions for rates")
    rows = []
    for n in resolutions:
        res = (n,) if problem.dim == 1 else (n, n)
        mesh = problem.build_mesh(res)
        space = build_space(mesh, problem.bc)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            form = assemble_form(space, problem)
        spec = compute_spectrum(form, k)
        h = _mesh_h(mesh)
        rows.append({"n": int(n), "h": h, "eigenvalues": np.real(spec.eigenvalues)})

    rates = []
    for i in range(k):
        lams = np.array([row["eigenvalues"][i] for row in rows])
        if np.all(np.abs(lams) <= 1e-10):
            rates.append("exact")
            continue
        hs = np.array([row["h"] for row in rows])
        diffs = np.diff(lams)
        entry = []
        for j in range(len(diffs) - 1):
            if abs(diffs[j + 1]) < 1e-300:
                entry.append(None)
            else:
                entry.append(
                    float(
                        np.log(abs(diffs[j] / diffs[j + 1]))
                        / np.log(hs[j] / hs[j + 1])
                    )
                )
        rates.append(entry)
    return {
        "resolutions": [row["n"] for row in rows],
        "h": [row["h"] for row in rows],
        "eigenvalues": [[float(v) for v in row["eigenvalues"]] for row in rows],
        "rates": rates,
    }


def _mesh_h(mesh):
    if mesh.dimension == 1:
        return float(np.max(mesh.cell_measures))
    areas = mesh.cell_measures
    return float(np.sqrt(2.0 * np.max(areas)))


def eigenfunction_csv(space, solution, eigen_index):
    """CSV plot data: one line per vertex, coordinates then value."""
    full = space.vertex_values(solution.coeffs)
    lines = []
    for v, val in zip(space.mesh.vertices, full):
        coords = ",".join(repr(float(c)) for c in v)
        lines.append(f"{coords},{val!r}")
    return "\n".join(lines) + "\n"
