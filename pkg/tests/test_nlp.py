import json

import numpy as np
import pytest

from condkkt import builtin_suite, get_problem, problem_names
from condkkt.nlp import QpParseError, check_derivatives, dense_problem, lift_problem, load_qp_json
from condkkt.sparse import StructuralError


def interior_point(P, seed=0):
    rng = np.random.default_rng(seed)
    x = P.x0 + 0.1 * rng.uniform(-1, 1, P.n)
    x[P.bounded] = np.abs(x[P.bounded]) + 0.1
    return x


def test_quadratic_gradient_exact():
    P = dense_problem("sq", 3, lambda x: 0.5 * x @ x, lambda x: x.copy(), lambda x: np.eye(3), x0=[0.3, -1.0, 2.0])
    assert check_derivatives(P, step=1e-5).gradient <= 1e-7


def test_lp_simple_jacobian():
    rep = check_derivatives(get_problem("lp_simple"))
    assert rep.jac_eq <= 1e-8 and rep.jac_ineq <= 1e-8


def test_scurve_all():
    assert check_derivatives(get_problem("scurve")).worst <= 1e-5


@pytest.mark.parametrize("name", problem_names())
def test_suite_derivatives(name):
    P = get_problem(name)
    for seed in range(2):
        rep = check_derivatives(P, interior_point(P, seed), seed=seed)
        assert rep.worst <= 1e-5, rep
        assert rep.hessian_symmetry == 0.0


@pytest.mark.parametrize("name", problem_names())
def test_patterns_constant_and_shapes(name):
    P = get_problem(name)
    x1, x2 = interior_point(P, 1), interior_point(P, 2)
    rng = np.random.default_rng(0)
    y, z = rng.standard_normal(P.m_e), rng.uniform(0.1, 1, P.m_i)
    W1, W2 = P.hess(x1, y, z), P.hess(x2, 2 * y, 2 * z)
    assert W1.shape == (P.n, P.n)
    assert (abs(W1 - W1.T)).max() == 0 if W1.nnz else True
    assert P.jac_g(x1).shape == (P.m_e, P.n) and P.jac_h(x1).shape == (P.m_i, P.n)
    assert P.jac_g(x1).nnz == P.jac_g(x2).nnz
    assert P.jac_h(x1).nnz == P.jac_h(x2).nnz
    r, c = P.hess_structure
    assert np.all(r >= c)


@pytest.mark.parametrize("name", problem_names())
def test_lagrangian_consistency(name):
    P = get_problem(name)
    x = interior_point(P, 3)
    rng = np.random.default_rng(3)
    y, z = rng.standard_normal(P.m_e), rng.uniform(0.1, 1, P.m_i)

    def L(v):
        return P.f(v) + (P.g(v) @ y if P.m_e else 0) + (P.h(v) @ z if P.m_i else 0)

    step = 1e-6
    fd = np.array([(L(x + step * e) - L(x - step * e)) / (2 * step) for e in np.eye(P.n)])
    assert np.max(np.abs(P.lagrangian_grad(x, y, z) - fd) / np.maximum(1, np.abs(fd))) <= 1e-5


def test_suite_contents():
    suite = {e.name: e for e in builtin_suite()}
    assert len(suite) >= 10
    assert suite["qp_eq"].reference_objective == 0.25
    opf = suite["opf9"].problem
    assert opf.m_e > 0 and opf.m_i > 0
    W = opf.hess(opf.x0, np.ones(opf.m_e), np.ones(opf.m_i)).toarray()
    assert np.min(np.linalg.eigvalsh(W)) < 0  # nonconvex Lagrangian Hessian
    kinds = set().union(*(e.problem.tags for e in suite.values()))
    for tag in ("equality", "inequality", "mixed", "degenerate", "nonconvex", "opf", "control"):
        assert tag in kinds
    for e in suite.values():
        assert (e.reference_objective is None) == (not e.expect_optimal)


def test_unknown_problem_lists_names():
    with pytest.raises(KeyError, match="qp_eq"):
        get_problem("missing_name")


def test_lifting():
    P = get_problem("lp_simple")
    tau = 1e-3
    Q = lift_problem(P, tau)
    x = np.array([1.0, 0.5, 2.0])
    g = P.g(x)
    assert Q.m_e == 0 and Q.m_i == 2 * P.m_e + P.m_i
    assert np.allclose(Q.h(x), np.concatenate([g - tau, -g - tau, P.h(x)]))
    assert check_derivatives(Q, x).worst <= 1e-8
    assert lift_problem(get_problem("qp_ineq"), tau).m_i == 1


def write(tmp_path, data, name="qp.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_qp_equality_file(tmp_path):
    from condkkt import IpmOptions, solve

    path = write(tmp_path, {"n": 2, "Q": [[0, 0, 1.0], [1, 1, 1.0]], "c": [0, 0],
                            "A_eq": [[0, 0, 1.0], [0, 1, 1.0]], "b_eq": [-1.0]})
    P = load_qp_json(path)
    assert (P.n, P.m_e, P.m_i) == (2, 1, 0)
    for strategy in ("k1", "hykkt", "lifted", "oracle"):
        tol = 1e-6 if strategy == "lifted" else 1e-8
        res = solve(P, IpmOptions(tol=tol, strategy=strategy))
        assert res.optimal
        assert np.allclose(res.x, [0.5, 0.5], atol=1e-5)


def test_qp_separable(tmp_path):
    from condkkt import solve

    P = load_qp_json(write(tmp_path, {"n": 2, "Q": [[0, 0, 1.0], [1, 1, 4.0]], "c": [-1.0, -4.0]}))
    assert np.allclose(solve(P).x, [1.0, 1.0], atol=1e-8)


def test_qp_inequality_sign(tmp_path):
    # x1 - 2 <= 0 is inactive at the unconstrained optimum x1 = 1
    P = load_qp_json(write(tmp_path, {"n": 1, "Q": [[0, 0, 1.0]], "c": [-1.0], "A_in": [[0, 0, 1.0]],
                                      "b_in": [-2.0], "bounded": [0]}))
    assert np.allclose(P.h(np.array([1.0])), [-1.0])
    assert P.bounded.tolist() == [True]


def test_qp_missing_Q(tmp_path):
    with pytest.raises(QpParseError) as exc:
        load_qp_json(write(tmp_path, {"n": 2, "c": [0, 0]}))
    assert exc.value.pointer == "/Q"
    assert "Q" in str(exc.value)


def test_qp_bad_type(tmp_path):
    with pytest.raises(QpParseError) as exc:
        load_qp_json(write(tmp_path, {"n": 2, "Q": [[0, 0, "x"]], "c": [0, 0]}))
    assert exc.value.pointer == "/Q/0/2"


def test_qp_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(QpParseError):
        load_qp_json(path)


@pytest.mark.parametrize("data", [
    {"n": 2, "Q": [], "c": [0.0]},
    {"n": 2, "Q": [[2, 0, 1.0]], "c": [0, 0]},
    {"n": 2, "Q": [], "c": [0, 0], "me": 1, "A_eq": [[0, 0, 1.0]], "b_eq": [1.0, 2.0]},
    {"n": 2, "Q": [], "c": [0, 0], "A_eq": [[3, 0, 1.0]], "b_eq": [1.0]},
    {"n": 2, "Q": [], "c": [0, 0], "bounded": [5]},
])
def test_qp_dimension_mismatch(tmp_path, data):
    with pytest.raises(StructuralError):
        load_qp_json(write(tmp_path, data))


def test_problem_validation():
    with pytest.raises(StructuralError):
        dense_problem("bad", 2, lambda x: 0.0, lambda x: x, lambda x: np.eye(2), x0=[1.0])
