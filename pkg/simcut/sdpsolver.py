"""Conic feasibility solver for the Lasserre constraint system.

The moment matrix is a symmetric PSD cvxpy variable tied to its moment
structure by one sparse linear map over vec(Y) that pairs Y[S, T] with
Y[rep(S ∪ T)]; the map is cached per index and shared by every fixing. With ``slack_objective``
the solver maximizes the smallest slack λ of the objective/active families,
which keeps the problem feasible and turns infeasibility into a quantitative
witness (λ* < 0).
"""

import logging
from functools import lru_cache
from typing import Dict, Optional, Tuple

import cvxpy as cp
import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field

from simcut.errors import Infeasible, MaxItersExceeded
from simcut.lasserre import (
    ConstraintSet,
    MomentIndex,
    MomentSolution,
    check_feasible,
)

logger = logging.getLogger("simcut.sdpsolver")

ACCEPT_FACTOR = 10.0


class SolveConfig(BaseModel):
    max_iters: int = Field(10_000, ge=1, description="Iteration cap passed to the conic solver.")
    eq_tol: float = Field(1e-7, gt=0.0, description="Tolerance on affine constraints.")
    psd_tol: float = Field(1e-8, gt=0.0, description="Tolerance on the smallest eigenvalue.")
    slack_objective: bool = Field(True, description="Maximize the minimum family slack λ.")
    solver: Optional[str] = Field(None, description="cvxpy solver name; default Clarabel, else SCS.")
    exactify_rounds: int = Field(50, ge=1, description="Alternating projection rounds after solving.")


# --- structure helpers ---

def union_labels(index: MomentIndex) -> np.ndarray:
    """Bitmask of S ∪ T for every matrix entry."""
    masks = np.array(index.subsets, dtype=np.int64)
    return masks[:, None] | masks[None, :]


@lru_cache(maxsize=64)
def consistency_pairs(index: MomentIndex) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Upper-triangle entries (i, j) paired with the canonical entry (a, b) of their union."""
    labels = union_labels(index)
    I, J, A, B = [], [], [], []
    rep: Dict[int, Tuple[int, int]] = {}
    for i in range(index.size):
        for j in range(i, index.size):
            u = int(labels[i, j])
            if u not in rep:
                rep[u] = index.split(u)
            a, b = rep[u]
            a, b = min(a, b), max(a, b)
            if (i, j) != (a, b):
                I.append(i)
                J.append(j)
                A.append(a)
                B.append(b)
    out = []
    for xs in (I, J, A, B):
        arr = np.array(xs, dtype=np.int64)
        arr.setflags(write=False)
        out.append(arr)
    return tuple(out)


@lru_cache(maxsize=64)
def consistency_map(index: MomentIndex) -> sp.csr_matrix:
    """Sparse D with D @ vec(Y) = Y[i, j] - Y[a, b] over the consistency pairs; vec is column-major."""
    I, J, A, B = consistency_pairs(index)
    N = index.size
    m = I.size
    rows = np.concatenate([np.arange(m), np.arange(m)])
    cols = np.concatenate([I + J * N, A + B * N])
    data = np.concatenate([np.ones(m), -np.ones(m)])
    return sp.csr_matrix((data, (rows, cols)), shape=(m, N * N))


def exactify(index: MomentIndex, Y: np.ndarray, rounds: int = 50) -> np.ndarray:
    """Alternate PSD projection and moment averaging; ends consistent with Y[∅, ∅] = 1."""
    labels = union_labels(index)
    _, inverse = np.unique(labels, return_inverse=True)
    inverse = inverse.reshape(labels.shape)
    counts = np.bincount(inverse.ravel())
    Y = (np.asarray(Y, dtype=np.float64) + np.asarray(Y, dtype=np.float64).T) / 2.0
    for round_ in range(rounds):
        w, V = np.linalg.eigh(Y)
        if round_ > 0 and w[0] >= 0.0:
            break
        Y = (V * np.clip(w, 0.0, None)) @ V.T
        means = np.bincount(inverse.ravel(), weights=Y.ravel()) / counts
        Y = np.clip(means[inverse], 0.0, 1.0)
        Y[0, 0] = 1.0
    return Y


# --- solve ---

def _constant_check(C: ConstraintSet, tol: float) -> None:
    const = C.constant_rows()
    if const.size == 0:
        return
    values = C.G[const, 0]
    bad = const[values < -tol]
    if bad.size:
        witness = [{"family": C.rows[i].family, "instance": C.rows[i].instance + 1, "value": float(C.G[i, 0])} for i in bad]
        raise Infeasible("fixed-value constraint violated", {"witness": witness})


def _solver_kwargs(solver: str, config: SolveConfig) -> dict:
    if solver == cp.SCS:
        return {"max_iters": config.max_iters, "eps": min(config.eq_tol, 1e-6)}
    if solver == cp.CLARABEL:
        return {"max_iter": config.max_iters}
    return {}


def _pick_solver(config: SolveConfig) -> str:
    if config.solver:
        return config.solver
    return cp.CLARABEL if cp.CLARABEL in cp.installed_solvers() else cp.SCS


def solve(C: ConstraintSet, index: Optional[MomentIndex] = None, config: Optional[SolveConfig] = None) -> MomentSolution:
    """Find a PSD moment matrix satisfying the constraint set, or raise Infeasible."""
    config = config or SolveConfig()
    index = index or C.index
    _constant_check(C, config.eq_tol)
    N = index.size

    if N == 1:
        M = MomentSolution(index=index, Y=np.ones((1, 1)), fixing=C.fixing, psd_tol=config.psd_tol, eq_tol=config.eq_tol)
        return M

    X = cp.Variable((N, N), symmetric=True)
    constraints = [X >> 0, X[0, 0] == 1]
    D = consistency_map(index)
    if D.shape[0]:
        constraints.append(D @ cp.reshape(X, (N * N,), order="F") == 0)
    y = X[:, 0]
    lam = cp.Variable() if config.slack_objective else None
    if C.G.shape[0]:
        constraints.append(C.G @ y >= (lam if lam is not None else 0.0))
    if lam is not None:
        constraints.append(lam <= 1.0)
        problem = cp.Problem(cp.Maximize(lam), constraints)
    else:
        problem = cp.Problem(cp.Minimize(0), constraints)

    solver = _pick_solver(config)
    try:
        problem.solve(solver=solver, **_solver_kwargs(solver, config))
    except cp.error.SolverError as e:
        raise MaxItersExceeded(f"{solver} failed: {e}", {"solver": solver}) from e

    status = problem.status
    logger.debug(f"{solver} status={status} value={problem.value}")
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        raise Infeasible(f"solver reports {status}", {"status": status, "solver": solver})
    if X.value is None:
        raise MaxItersExceeded(f"solver stopped with status {status}", {"status": status, "solver": solver})

    if lam is not None and lam.value is not None and float(lam.value) < -config.eq_tol:
        raise Infeasible(
            f"best achievable family slack is {float(lam.value):.3e}",
            {"status": status, "max_min_slack": float(lam.value), "solver": solver},
        )

    Y = exactify(index, X.value, config.exactify_rounds)
    M = MomentSolution(index=index, Y=Y, fixing=C.fixing, psd_tol=config.psd_tol, eq_tol=config.eq_tol)
    report = check_feasible(M, C)
    factor = 1.0 if status == cp.OPTIMAL else ACCEPT_FACTOR
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or not report.within(ACCEPT_FACTOR):
        raise MaxItersExceeded(
            f"solution with status {status} fails the residual check",
            {"status": status, "report": report.to_dict(), "solver": solver},
        )
    if not report.within(factor):
        logger.warning(f"Accepted inaccurate solution: {report.residuals}")
    slack = None if lam is None or lam.value is None else float(lam.value)
    logger.debug(f"Solved level-{index.level} SDP (N={N}), slack={slack}")
    return M
