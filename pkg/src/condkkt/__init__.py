"""Condensed-space interior-point solver with DirectK1, HyKKT and LiftedKKT steps."""

from .ipm import IpmOptions, IpmResult, solve
from .kkt import Direction, Iterate
from .nlp import NlpProblem, dense_problem, load_qp_json, quadratic_problem
from .problems import builtin_suite, get_problem, problem_names
from .strategies import DenseK2Oracle, DirectK1, HyKkt, LiftedKkt, make_strategy

__all__ = [
    "DenseK2Oracle", "Direction", "DirectK1", "HyKkt", "IpmOptions", "IpmResult", "Iterate", "LiftedKkt",
    "NlpProblem", "builtin_suite", "dense_problem", "get_problem", "load_qp_json", "make_strategy",
    "problem_names", "quadratic_problem", "solve",
]
__version__ = "0.1.0"
