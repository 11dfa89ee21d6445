"""Problem description: domain, coefficients, data, exponents, numerics.

Problem files are plain key/value text with sections::

    # comment
    [domain]
    kind = interval            # or rect
    a = 0                      # interval bounds (rect: x0, x1, y0, y1)
    b = 3.141592653589793
    n = 200                    # rect: nx, ny
    bc = neumann               # or dirichlet

    [operator]
    p11 = 1                    # upper-triangle entries of P (p11, p12, p22)
    q11 = 1                    # entries of Q; omitted Q defaults to P
    H = 0.5 ; x                # list entries separated by ';'
    R = 1 ; 1                  # vector fields: components comma-separated
    F = 0

    [data]
    f = cos(x)
    g = 1
    T = 1

    [exponents]
    t = 4
    q = 8
    gain = 2                   # omega (Neumann) or sigma (Dirichlet)

    [numerics]
    seed = 1234
    trials = 200
    tol_rank = 1e-9

Unset keys fall back to the defaults shown by ProblemSpec.
"""

from dataclasses import dataclass, field

from .errors import SpecFormatError
from .fields import (
    EMPTY_TUPLE,
    MatrixField,
    ScalarExpr,
    SubunitTuple,
    ZERO,
    as_expr,
)
from .mesh import build_interval_mesh, build_rect_mesh

_DEFAULTS = {"t": 4.0, "q": 8.0, "gain": 2.0, "seed": 1234, "trials": 200, "tol_rank": 1e-9}


@dataclass
class ProblemSpec:
    domain_kind: str
    bounds: tuple
    resolution: tuple
    bc: str
    P: MatrixField
    Q: MatrixField
    H: list = field(default_factory=list)
    R: SubunitTuple = EMPTY_TUPLE
    G: list = field(default_factory=list)
    S: SubunitTuple = EMPTY_TUPLE
    F: ScalarExpr = ZERO
    f: ScalarExpr = ZERO
    g: list = field(default_factory=list)
    T: SubunitTuple = EMPTY_TUPLE
    t_exponent: float = _DEFAULTS["t"]
    q_exponent: float = _DEFAULTS["q"]
    gain: float = _DEFAULTS["gain"]
    seed: int = _DEFAULTS["seed"]
    trials: int = _DEFAULTS["trials"]
    tol_rank: float = _DEFAULTS["tol_rank"]

    @property
    def dim(self):
        return 1 if self.domain_kind == "interval" else 2

    def __post_init__(self):
        if len(self.H) != len(self.R):
            raise SpecFormatError(f"|H|={len(self.H)} but |R|={len(self.R)}")
        if len(self.G) != len(self.S):
            raise SpecFormatError(f"|G|={len(self.G)} but |S|={len(self.S)}")
        if len(self.g) != len(self.T):
            raise SpecFormatError(f"|g|={len(self.g)} but |T|={len(self.T)}")
        for tup in (self.R, self.S, self.T):
            for vf in tup:
                if len(vf) != self.dim:
                    raise SpecFormatError(
                        f"vector field has {len(vf)} components on a {self.dim}D domain"
                    )

    def build_mesh(self, resolution=None):
        res = resolution if resolution is not None else self.resolution
        if self.domain_kind == "interval":
            (a, b), = self.bounds
            n = res[0] if isinstance(res, (tuple, list)) else int(res)
            return build_interval_mesh(a, b, n)
        if isinstance(res, int):
            res = (res, res)
        return build_rect_mesh(self.bounds[0], self.bounds[1], res[0], res[1])

    def exponent_warnings(self):
        """Threshold checks t > gain', q > 2 gain' (violations warn, not fail)."""
        conj = self.gain / (self.gain - 1.0) if self.gain > 1.0 else float("inf")
        notes = []
        if self.gain <= 1.0:
            notes.append(f"gain must exceed 1 for the theory to apply, got {self.gain}")
        if self.t_exponent <= conj:
            notes.append(f"t={self.t_exponent} does not exceed gain'={conj:.6g}")
        if self.q_exponent <= 2.0 * conj:
            notes.append(f"q={self.q_exponent} does not exceed 2*gain'={2 * conj:.6g}")
        return notes

    def resolved_dict(self):
        """Spec with defaults filled, for embedding in command output."""

        def mat(m):
            return {f"{i + 1}{j + 1}": e.source for (i, j), e in sorted(m.entries.items())}

        return {
            "domain": {
                "kind": self.domain_kind,
                "bounds": [list(b) for b in self.bounds],
                "resolution": list(self.resolution),
                "bc": self.bc,
            },
            "operator": {
                "P": mat(self.P),
                "Q": mat(self.Q),
                "H": [e.source for e in self.H],
                "R": [[c.source for c in f] for f in self.R],
                "G": [e.source for e in self.G],
                "S": [[c.source for c in f] for f in self.S],
                "F": self.F.source,
            },
            "data": {
                "f": self.f.source,
                "g": [e.source for e in self.g],
                "T": [[c.source for c in f] for f in self.T],
            },
            "exponents": {"t": self.t_exponent, "q": self.q_exponent, "gain": self.gain},
            "numerics": {
                "seed": self.seed,
                "trials": self.trials,
                "tol_rank": self.tol_rank,
            },
        }


def make_problem(
    domain_kind="interval",
    bounds=((0.0, 1.0),),
    resolution=(8,),
    bc="neumann",
    P=None,
    Q=None,
    H=(),
    R=(),
    G=(),
    S=(),
    F="0",
    f="0",
    g=(),
    T=(),
    **numerics,
):
    """Convenience constructor accepting plain strings for all coefficients."""
    dim = 1 if domain_kind == "interval" else 2
    if P is None and Q is None:
        P = Q = MatrixField.identity(dim)
    elif P is None:
        Q = _as_matrix(Q, dim)
        P = Q
    elif Q is None:
        P = _as_matrix(P, dim)
        Q = P
    else:
        P = _as_matrix(P, dim)
        Q = _as_matrix(Q, dim)
    return ProblemSpec(
        domain_kind=domain_kind,
        bounds=tuple(tuple(b) for b in bounds),
        resolution=tuple(resolution) if isinstance(resolution, (tuple, list)) else (resolution,),
        bc=bc,
        P=P,
        Q=Q,
        H=[as_expr(e) for e in H],
        R=SubunitTuple.from_components(R),
        G=[as_expr(e) for e in G],
        S=SubunitTuple.from_components(S),
        F=as_expr(F),
        f=as_expr(f),
        g=[as_expr(e) for e in g],
        T=SubunitTuple.from_components(T),
        **numerics,
    )


def _as_matrix(value, dim):
    if isinstance(value, MatrixField):
        return value
    if isinstance(value, dict):
        return MatrixField.from_entries(dim, **{f"e{k}": v for k, v in value.items()})
    if isinstance(value, (list, tuple)):
        return MatrixField.diagonal(value)
    return MatrixField.scaled_identity(dim, value)


def _split_list(value):
    parts = [p.strip() for p in value.split(";")]
    return [p for p in parts if p]


def _parse_fields(value):
    return [[c.strip() for c in part.split(",")] for part in _split_list(value)]


def parse_problem_text(text):
    """Parse problem-file text into a ProblemSpec; raises SpecFormatError."""
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise SpecFormatError(f"expected 'key = value' at line {lineno}", line=lineno)
        if current is None:
            raise SpecFormatError(f"key outside any section at line {lineno}", line=lineno)
        key, value = line.split("=", 1)
        sections[current][key.strip()] = value.strip()

    dom = sections.get("domain", {})
    kind = dom.get("kind", "interval").lower()
    try:
        if kind == "interval":
            bounds = ((float(dom.get("a", 0.0)), float(dom.get("b", 1.0))),)
            resolution = (int(dom.get("n", 8)),)
        elif kind == "rect":
            bounds = (
                (float(dom.get("x0", 0.0)), float(dom.get("x1", 1.0))),
                (float(dom.get("y0", 0.0)), float(dom.get("y1", 1.0))),
            )
            resolution = (int(dom.get("nx", 4)), int(dom.get("ny", 4)))
        else:
            raise SpecFormatError(f"unknown domain kind {kind!r}")
    except ValueError as exc:
        raise SpecFormatError(f"bad numeric value in [domain]: {exc}") from exc
    bc = dom.get("bc", "neumann").lower()
    if bc not in ("neumann", "dirichlet"):
        raise SpecFormatError(f"bc must be neumann or dirichlet, got {bc!r}")

    dim = 1 if kind == "interval" else 2
    op = sections.get("operator", {})
    P = _matrix_from_section(op, "p", dim)
    Q = _matrix_from_section(op, "q", dim)
    if P is None and Q is None:
        P = Q = MatrixField.identity(dim)
    elif P is None:
        P = Q
    elif Q is None:
        Q = P

    data = sections.get("data", {})
    exps = sections.get("exponents", {})
    gain = exps.get("gain", exps.get("omega", exps.get("sigma", _DEFAULTS["gain"])))
    nums = sections.get("numerics", {})
    try:
        return ProblemSpec(
            domain_kind=kind,
            bounds=bounds,
            resolution=resolution,
            bc=bc,
            P=P,
            Q=Q,
            H=[ScalarExpr(e) for e in _split_list(op.get("H", ""))],
            R=SubunitTuple.from_components(_parse_fields(op.get("R", ""))),
            G=[ScalarExpr(e) for e in _split_list(op.get("G", ""))],
            S=SubunitTuple.from_components(_parse_fields(op.get("S", ""))),
            F=ScalarExpr(op.get("F", "0")),
            f=ScalarExpr(data.get("f", "0")),
            g=[ScalarExpr(e) for e in _split_list(data.get("g", ""))],
            T=SubunitTuple.from_components(_parse_fields(data.get("T", ""))),
            t_exponent=float(exps.get("t", _DEFAULTS["t"])),
            q_exponent=float(exps.get("q", _DEFAULTS["q"])),
            gain=float(gain),
            seed=int(nums.get("seed", _DEFAULTS["seed"])),
            trials=int(nums.get("trials", _DEFAULTS["trials"])),
            tol_rank=float(nums.get("tol_rank", _DEFAULTS["tol_rank"])),
        )
    except ValueError as exc:
        raise SpecFormatError(str(exc)) from exc


def parse_problem_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_problem_text(fh.read())


def _matrix_from_section(section, prefix, dim):
    keys = {k for k in section if k.startswith(prefix) and k[len(prefix):].isdigit()}
    if not keys:
        return None
    named = {}
    for k in keys:
        named["e" + k[len(prefix):]] = section[k]
    return MatrixField.from_entries(dim, **named)
