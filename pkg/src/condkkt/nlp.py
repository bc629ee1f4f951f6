"""Nonlinear programs in the form

    min f(x)  s.t.  g(x) = 0,  h(x) <= 0,  x_i >= 0 for flagged i,

with callback derivatives on fixed sparsity patterns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import jsonschema
import numpy as np
import scipy.sparse as sp

from .sparse import StructuralError

_EMPTY = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))


def _structure(rows, cols):
    return (np.asarray(rows, dtype=np.int64).ravel(), np.asarray(cols, dtype=np.int64).ravel())


@dataclass(frozen=True, eq=False)
class NlpProblem:
    """Callback-defined NLP.

    Jacobian callbacks return the values for ``*_structure`` (duplicates are
    summed). ``hess_values(x, y, z)`` returns the lower-triangle values of
    the Hessian of f + y^T g + z^T h on ``hess_structure``.
    """

    name: str
    n: int
    m_e: int
    m_i: int
    bounded: np.ndarray
    x0: np.ndarray
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hess_structure: tuple
    hess_values: Callable
    eq: Optional[Callable] = None
    eq_jac_structure: tuple = _EMPTY
    eq_jac_values: Optional[Callable] = None
    ineq: Optional[Callable] = None
    ineq_jac_structure: tuple = _EMPTY
    ineq_jac_values: Optional[Callable] = None
    description: str = ""
    tags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        b = np.zeros(self.n, dtype=bool)
        b[:] = np.asarray(self.bounded, dtype=bool)
        object.__setattr__(self, "bounded", b)
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).copy())
        if self.x0.shape != (self.n,):
            raise StructuralError(f"{self.name}: x0 has shape {self.x0.shape}, expected ({self.n},)")
        for attr, m in (("eq_jac_structure", self.m_e), ("ineq_jac_structure", self.m_i)):
            r, c = _structure(*getattr(self, attr))
            object.__setattr__(self, attr, (r, c))
            if r.size and (r.max() >= m or c.max() >= self.n or r.min() < 0 or c.min() < 0):
                raise StructuralError(f"{self.name}: {attr} out of range")
        r, c = _structure(*self.hess_structure)
        if np.any(r < c):
            raise StructuralError(f"{self.name}: Hessian structure must be lower triangular")
        if r.size and (r.max() >= self.n or c.min() < 0):
            raise StructuralError(f"{self.name}: Hessian structure out of range")
        object.__setattr__(self, "hess_structure", (r, c))
        if self.m_e and (self.eq is None or self.eq_jac_values is None):
            raise StructuralError(f"{self.name}: equality callbacks missing")
        if self.m_i and (self.ineq is None or self.ineq_jac_values is None):
            raise StructuralError(f"{self.name}: inequality callbacks missing")

    # --- evaluations -----------------------------------------------------

    def f(self, x) -> float:
        return float(self.objective(x))

    def grad(self, x) -> np.ndarray:
        return np.asarray(self.gradient(x), dtype=float)

    def g(self, x) -> np.ndarray:
        if not self.m_e:
            return np.zeros(0)
        return np.asarray(self.eq(x), dtype=float)

    def h(self, x) -> np.ndarray:
        if not self.m_i:
            return np.zeros(0)
        return np.asarray(self.ineq(x), dtype=float)

    def jac_g(self, x) -> sp.csr_matrix:
        return self._jac(self.eq_jac_structure, self.eq_jac_values, self.m_e, x)

    def jac_h(self, x) -> sp.csr_matrix:
        return self._jac(self.ineq_jac_structure, self.ineq_jac_values, self.m_i, x)

    def _jac(self, structure, values, m, x):
        r, c = structure
        vals = np.zeros(r.size) if values is None or r.size == 0 else np.asarray(values(x), dtype=float)
        J = sp.coo_matrix((vals, (r, c)), shape=(m, self.n)).tocsr()
        J.sum_duplicates()
        return J

    def hess(self, x, y=None, z=None) -> sp.csr_matrix:
        """Full symmetric Hessian of the Lagrangian."""
        y = np.zeros(self.m_e) if y is None else y
        z = np.zeros(self.m_i) if z is None else z
        r, c = self.hess_structure
        vals = np.asarray(self.hess_values(x, y, z), dtype=float) if r.size else np.zeros(0)
        # sum duplicates once, then mirror, so W equals W^T bit for bit
        lower = sp.coo_matrix((vals, (r, c)), shape=(self.n, self.n)).tocsr().tocoo()
        off = lower.row != lower.col
        upper = sp.coo_matrix((lower.data[off], (lower.col[off], lower.row[off])), shape=(self.n, self.n))
        return (lower.tocsr() + upper.tocsr()).tocsr()

    def lagrangian_grad(self, x, y, z) -> np.ndarray:
        """grad f + G^T y + H^T z (bound multipliers excluded)."""
        out = self.grad(x)
        if self.m_e:
            out = out + self.jac_g(x).T @ y
        if self.m_i:
            out = out + self.jac_h(x).T @ z
        return out


# --- small dense problems ---------------------------------------------------


def dense_problem(
    name,
    n,
    f,
    grad,
    hess_f,
    x0,
    bounded=None,
    g=None,
    jac_g=None,
    hess_g=None,
    m_e=0,
    h=None,
    jac_h=None,
    hess_h=None,
    m_i=0,
    description="",
    tags=(),
) -> NlpProblem:
    """Wrap dense callbacks into an NlpProblem with full patterns.

    ``hess_g(x, y)`` / ``hess_h(x, z)`` return the multiplier-weighted sums
    of constraint Hessians as dense n x n arrays.
    """
    rows, cols = np.tril_indices(n)

    def hess_values(x, y, z):
        H = np.array(hess_f(x), dtype=float)
        if m_e and hess_g is not None:
            H = H + hess_g(x, y)
        if m_i and hess_h is not None:
            H = H + hess_h(x, z)
        return H[rows, cols]

    def dense_jac(m, fn):
        r, c = np.indices((m, n))
        return (r.ravel(), c.ravel()), (lambda x: np.asarray(fn(x), dtype=float).ravel())

    kw = {}
    if m_e:
        s, v = dense_jac(m_e, jac_g)
        kw.update(eq=g, eq_jac_structure=s, eq_jac_values=v)
    if m_i:
        s, v = dense_jac(m_i, jac_h)
        kw.update(ineq=h, ineq_jac_structure=s, ineq_jac_values=v)
    return NlpProblem(
        name=name,
        n=n,
        m_e=m_e,
        m_i=m_i,
        bounded=np.zeros(n, dtype=bool) if bounded is None else bounded,
        x0=x0,
        objective=f,
        gradient=grad,
        hess_structure=(rows, cols),
        hess_values=hess_values,
        description=description,
        tags=frozenset(tags),
        **kw,
    )


def quadratic_problem(
    name, Q, c, A_eq=None, b_eq=None, A_in=None, b_in=None, bounded=None, x0=None, description="", tags=()
) -> NlpProblem:
    """f = x^T Q x / 2 + c^T x,  g = A_eq x + b_eq,  h = A_in x + b_in."""
    c = np.asarray(c, dtype=float)
    n = c.size
    Q = sp.csr_matrix(Q, shape=(n, n))
    if abs(Q - Q.T).sum() > 1e-12 * max(1.0, abs(Q).sum()):
        raise StructuralError(f"{name}: Q must be symmetric")
    Ql = sp.tril(Q).tocoo()
    qvals = Ql.data.copy()
    A_eq = sp.csr_matrix((0, n)) if A_eq is None else sp.csr_matrix(A_eq)
    A_in = sp.csr_matrix((0, n)) if A_in is None else sp.csr_matrix(A_in)
    b_eq = np.zeros(A_eq.shape[0]) if b_eq is None else np.asarray(b_eq, dtype=float)
    b_in = np.zeros(A_in.shape[0]) if b_in is None else np.asarray(b_in, dtype=float)
    for A, bvec, label in ((A_eq, b_eq, "A_eq"), (A_in, b_in, "A_in")):
        if A.shape[1] != n or bvec.size != A.shape[0]:
            raise StructuralError(f"{name}: {label} has shape {A.shape}, rhs length {bvec.size}, n = {n}")
    Ae, Ai = A_eq.tocoo(), A_in.tocoo()
    ae_vals, ai_vals = Ae.data.copy(), Ai.data.copy()
    m_e, m_i = A_eq.shape[0], A_in.shape[0]
    x0 = np.ones(n) if x0 is None else x0
    return NlpProblem(
        name=name,
        n=n,
        m_e=m_e,
        m_i=m_i,
        bounded=np.zeros(n, dtype=bool) if bounded is None else bounded,
        x0=x0,
        objective=lambda x: 0.5 * x @ (Q @ x) + c @ x,
        gradient=lambda x: Q @ x + c,
        hess_structure=(Ql.row, Ql.col),
        hess_values=lambda x, y, z: qvals,
        eq=(lambda x: A_eq @ x + b_eq) if m_e else None,
        eq_jac_structure=(Ae.row, Ae.col),
        eq_jac_values=(lambda x: ae_vals) if m_e else None,
        ineq=(lambda x: A_in @ x + b_in) if m_i else None,
        ineq_jac_structure=(Ai.row, Ai.col),
        ineq_jac_values=(lambda x: ai_vals) if m_i else None,
        description=description,
        tags=frozenset(tags),
    )


# --- equality lifting -------------------------------------------------------


def lift_problem(P: NlpProblem, tau: float) -> NlpProblem:
    """Replace every g_i = 0 by g_i - tau <= 0 and -g_i - tau <= 0.

    The lifted inequalities come first: h' = (g - tau, -g - tau, h).
    """
    if P.m_e == 0:
        return P
    me, mi = P.m_e, P.m_i
    gr, gc = P.eq_jac_structure
    hr, hc = P.ineq_jac_structure
    rows = np.concatenate([gr, gr + me, hr + 2 * me])
    cols = np.concatenate([gc, gc, hc])

    def ineq(x):
        g = P.g(x)
        return np.concatenate([g - tau, -g - tau, P.h(x)])

    def ineq_jac_values(x):
        gv = np.asarray(P.eq_jac_values(x), dtype=float)
        hv = np.asarray(P.ineq_jac_values(x), dtype=float) if mi else np.zeros(0)
        return np.concatenate([gv, -gv, hv])

    def hess_values(x, y, z):
        return P.hess_values(x, z[:me] - z[me : 2 * me], z[2 * me :])

    return NlpProblem(
        name=f"{P.name}[lifted]",
        n=P.n,
        m_e=0,
        m_i=2 * me + mi,
        bounded=P.bounded,
        x0=P.x0,
        objective=P.objective,
        gradient=P.gradient,
        hess_structure=P.hess_structure,
        hess_values=hess_values,
        ineq=ineq,
        ineq_jac_structure=(rows, cols),
        ineq_jac_values=ineq_jac_values,
        description=P.description,
        tags=P.tags,
    )


# --- derivative verification ------------------------------------------------


@dataclass
class DerivativeReport:
    gradient: float
    jac_eq: float
    jac_ineq: float
    hessian: float
    hessian_symmetry: float

    @property
    def worst(self) -> float:
        return max(self.gradient, self.jac_eq, self.jac_ineq, self.hessian)


def _rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def _central(fun, x, step):
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        cols.append((np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * step))
    return np.column_stack(cols)


def check_derivatives(P: NlpProblem, x0=None, step=1e-5, seed=0) -> DerivativeReport:
    """Compare callbacks against central finite differences.

    Errors are |callback - fd| / max(1, |fd|), maximized entry-wise. The
    Hessian check uses random multipliers drawn from ``seed``.
    """
    x = np.asarray(P.x0 if x0 is None else x0, dtype=float)
    if np.any(x[P.bounded] <= 0):
        raise ValueError("x0 must be strictly positive on bounded components")
    rng = np.random.default_rng(seed)
    y = rng.uniform(-1, 1, P.m_e)
    z = rng.uniform(0.1, 1, P.m_i)

    fd_grad = _central(lambda v: np.array([P.f(v)]), x, step).ravel()
    err_grad = _rel_err(P.grad(x), fd_grad)
    err_g = _rel_err(P.jac_g(x).toarray(), _central(P.g, x, step)) if P.m_e else 0.0
    err_h = _rel_err(P.jac_h(x).toarray(), _central(P.h, x, step)) if P.m_i else 0.0
    W = P.hess(x, y, z).toarray()
    fd_W = _central(lambda v: P.lagrangian_grad(v, y, z), x, step)
    fd_W = 0.5 * (fd_W + fd_W.T)
    return DerivativeReport(
        gradient=err_grad,
        jac_eq=err_g,
        jac_ineq=err_h,
        hessian=_rel_err(W, fd_W),
        hessian_symmetry=float(np.max(np.abs(W - W.T))) if W.size else 0.0,
    )


# --- QP files ---------------------------------------------------------------


class QpParseError(ValueError):
    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


_TRIPLETS = {
    "type": "array",
    "items": {
        "type": "array",
        "prefixItems": [{"type": "integer", "minimum": 0}, {"type": "integer", "minimum": 0}, {"type": "number"}],
        "items": False,
        "minItems": 3,
    },
}
_VECTOR = {"type": "array", "items": {"type": "number"}}

QP_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["n", "Q", "c"],
    "properties": {
        "name": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "me": {"type": "integer", "minimum": 0},
        "mi": {"type": "integer", "minimum": 0},
        "Q": _TRIPLETS,
        "c": _VECTOR,
        "A_eq": _TRIPLETS,
        "b_eq": _VECTOR,
        "A_in": _TRIPLETS,
        "b_in": _VECTOR,
        "bounded": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "x0": _VECTOR,
    },
}


def _pointer(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        parts.append(missing)
    return "/" + "/".join(parts)


def _triplet_matrix(trip, shape, label):
    if not trip:
        return sp.csr_matrix(shape)
    r, c, v = (np.array(col) for col in zip(*trip))
    if r.max() >= shape[0] or c.max() >= shape[1]:
        raise StructuralError(f"{label}: triplet index out of range for shape {shape}")
    return sp.coo_matrix((v.astype(float), (r.astype(int), c.astype(int))), shape=shape).tocsr()


def load_qp_json(path) -> NlpProblem:
    """Load a sparse QP.

    Equalities read A_eq x + b_eq = 0 and inequalities A_in x + b_in <= 0.
    Q triplets follow the symmetric convention of ``csc_from_triplets``:
    an off-diagonal entry given once stands for both (i, j) and (j, i).
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise QpParseError("/", f"invalid JSON: {exc}") from exc
    validator = jsonschema.Draft202012Validator(QP_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise QpParseError(_pointer(err), err.message)

    n = data["n"]
    me = data.get("me", len(data.get("b_eq", [])))
    mi = data.get("mi", len(data.get("b_in", [])))
    if len(data["c"]) != n:
        raise StructuralError(f"c has length {len(data['c'])}, expected n = {n}")
    from .sparse import csc_from_triplets

    qt = data["Q"]
    if qt:
        r, c, v = zip(*qt)
        Qs = csc_from_triplets(n, r, c, v).to_scipy()
    else:
        Qs = sp.csr_matrix((n, n))
    A_eq = _triplet_matrix(data.get("A_eq", []), (me, n), "A_eq")
    A_in = _triplet_matrix(data.get("A_in", []), (mi, n), "A_in")
    b_eq = np.asarray(data.get("b_eq", np.zeros(me)), dtype=float)
    b_in = np.asarray(data.get("b_in", np.zeros(mi)), dtype=float)
    if b_eq.size != me or b_in.size != mi:
        raise StructuralError(f"rhs lengths ({b_eq.size}, {b_in.size}) do not match (me, mi) = ({me}, {mi})")
    bounded = np.zeros(n, dtype=bool)
    idx = data.get("bounded", [])
    if idx and max(idx) >= n:
        raise StructuralError("bounded index out of range")
    bounded[idx] = True
    x0 = np.asarray(data.get("x0", np.ones(n)), dtype=float)
    return quadratic_problem(
        data.get("name", path.stem), Qs, data["c"], A_eq, b_eq, A_in, b_in, bounded, x0
    )
