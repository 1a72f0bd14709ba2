"""Convex subproblem representation and the conic solver backend.

A ``ConicProgram`` is a convex quadratic objective over a real vector with
linear equalities, box bounds, second-order cones and convex quadratic
inequalities. Solving goes through a swappable ``ConicBackend``; the default
``CvxpyBackend`` hands the program to cvxpy (Clarabel first, then ECOS/SCS).
"""

import json
import logging
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import cvxpy as cp
import numpy as np
import scipy.linalg

from .errors import ConicProgramError

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-6
PSD_KERNEL_TOL = -1e-9
DEFAULT_SOLVER = "CLARABEL"
FALLBACK_SOLVERS = ("CLARABEL", "ECOS", "SCS")


@dataclass(frozen=True)
class LinearEquality:
    """A x = b."""

    A: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class BoxConstraint:
    """lower <= x <= upper (entries may be ±inf)."""

    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True)
class SecondOrderCone:
    """‖A x + b‖ <= cᵀ x + d."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float = 0.0


@dataclass(frozen=True)
class QuadraticInequality:
    """xᵀ Q x + aᵀ x + b <= 0 with Q PSD."""

    Q: np.ndarray
    a: np.ndarray
    b: float = 0.0


Constraint = Union[LinearEquality, BoxConstraint, SecondOrderCone, QuadraticInequality]


@dataclass
class ConicProgram:
    """minimize xᵀ kernel x + linearᵀ x + constant subject to ``constraints``."""

    kernel: np.ndarray
    linear: np.ndarray
    constant: float = 0.0
    constraints: List[Constraint] = field(default_factory=list)
    name: str = "program"

    def __post_init__(self) -> None:
        kernel = np.asarray(self.kernel, dtype=float)
        n = int(np.asarray(self.linear).size)
        if kernel.shape != (n, n):
            raise ConicProgramError(f"{self.name}: kernel shape {kernel.shape} does not match {n} variables")
        self.kernel = 0.5 * (kernel + kernel.T)
        self.linear = np.asarray(self.linear, dtype=float).reshape(n)
        _check_psd(self.kernel, f"{self.name}.kernel")
        for constraint in self.constraints:
            _check_constraint(constraint, n, self.name)

    @property
    def n(self) -> int:
        return int(self.linear.size)

    def objective(self, x: np.ndarray) -> float:
        return float(x @ self.kernel @ x + self.linear @ x + self.constant)


def _check_psd(matrix: np.ndarray, label: str) -> None:
    if matrix.size == 0:
        return
    eigvals = np.linalg.eigvalsh(matrix)
    if eigvals[0] < PSD_KERNEL_TOL * max(1.0, float(np.max(np.abs(eigvals)))):
        raise ConicProgramError(f"{label} is not PSD (min eigenvalue {eigvals[0]:.3e})")


def _check_constraint(constraint: Constraint, n: int, name: str) -> None:
    if isinstance(constraint, LinearEquality):
        ok = constraint.A.ndim == 2 and constraint.A.shape[1] == n and constraint.b.shape == (constraint.A.shape[0],)
    elif isinstance(constraint, BoxConstraint):
        ok = constraint.lower.shape == (n,) and constraint.upper.shape == (n,)
    elif isinstance(constraint, SecondOrderCone):
        ok = (
            constraint.A.ndim == 2
            and constraint.A.shape[1] == n
            and constraint.b.shape == (constraint.A.shape[0],)
            and constraint.c.shape == (n,)
        )
    elif isinstance(constraint, QuadraticInequality):
        ok = constraint.Q.shape == (n, n) and constraint.a.shape == (n,)
        if ok:
            _check_psd(0.5 * (constraint.Q + constraint.Q.T), f"{name}.quadratic")
    else:
        raise ConicProgramError(f"{name}: unsupported constraint type {type(constraint).__name__}")
    if not ok:
        raise ConicProgramError(f"{name}: {type(constraint).__name__} dimensions inconsistent with {n} variables")


@dataclass
class ConicSolution:
    x: np.ndarray
    status: str
    objective_value: float
    max_constraint_violation: float
    solver: Optional[str] = None
    detail: str = ""


def psd_factor(matrix: np.ndarray) -> np.ndarray:
    """R with Rᵀ R = matrix.

    Cholesky when the matrix is positive definite; otherwise an eigen factor
    keeping only the numerically positive part (Cholesky fails on singular
    PSD kernels, which MM linearization produces routinely).
    """
    matrix = 0.5 * (matrix + matrix.T)
    try:
        return np.asarray(scipy.linalg.cholesky(matrix, lower=False))
    except np.linalg.LinAlgError:
        eigvals, eigvecs = np.linalg.eigh(matrix)
        keep = eigvals > 1e-12 * max(1.0, float(np.max(np.abs(eigvals))))
        return np.sqrt(eigvals[keep])[:, None] * eigvecs[:, keep].T


def constraint_violation(program: ConicProgram, x: np.ndarray) -> float:
    """Largest constraint violation at x, each constraint normalized by its own scale."""
    worst = 0.0
    for constraint in program.constraints:
        if isinstance(constraint, LinearEquality):
            norms = np.maximum(np.linalg.norm(constraint.A, axis=1), 1e-300)
            value = float(np.max(np.abs(constraint.A @ x - constraint.b) / norms, initial=0.0))
        elif isinstance(constraint, BoxConstraint):
            value = float(np.max(np.maximum(constraint.lower - x, x - constraint.upper), initial=0.0))
        elif isinstance(constraint, SecondOrderCone):
            scale = max(float(np.sqrt(np.linalg.norm(constraint.A) ** 2 + np.linalg.norm(constraint.c) ** 2)), 1e-300)
            lhs = float(np.linalg.norm(constraint.A @ x + constraint.b))
            value = (lhs - float(constraint.c @ x) - constraint.d) / scale
        else:
            quad = float(x @ constraint.Q @ x)
            scale = max(abs(quad) + abs(float(constraint.a @ x)) + abs(constraint.b), 1e-300)
            value = (quad + float(constraint.a @ x) + constraint.b) / scale
        worst = max(worst, value)
    return worst


class ConicBackend(ABC):
    """Abstract solver backend."""

    @abstractmethod
    def solve(self, program: ConicProgram, tol: float, max_iter: int) -> ConicSolution:
        """Solve a program; never raises for solver failures, reports them through the status."""
        pass

    @abstractmethod
    def is_available(self) -> bool:
        """Check if the backend can solve programs in this environment."""
        pass


def _solver_options(solver: str, tol: float, max_iter: int) -> Dict[str, Any]:
    if solver == "CLARABEL":
        return {"tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": tol, "max_iter": max_iter}
    if solver == "ECOS":
        return {"abstol": tol, "reltol": tol, "feastol": tol, "max_iters": max_iter}
    if solver == "SCS":
        return {"eps_abs": tol, "eps_rel": tol, "max_iters": max(max_iter, 10000)}
    return {}


class CvxpyBackend(ConicBackend):
    """Backend using cvxpy with a configurable conic solver.

    Args:
        solver: Solver name. If None, reads CRA_ISAC_SOLVER (default: CLARABEL)
    """

    def __init__(self, solver: Optional[str] = None) -> None:
        self.solver: str = (solver or os.environ.get("CRA_ISAC_SOLVER", DEFAULT_SOLVER)).upper()
        self._available: Optional[bool] = None

    def is_available(self) -> bool:
        if self._available is None:
            self._available = bool(self._candidates())
            if not self._available:
                logger.info(f"[CONIC] No usable conic solver among {self.solver}, {', '.join(FALLBACK_SOLVERS)}")
        return self._available

    def _candidates(self) -> List[str]:
        installed = set(cp.installed_solvers())
        ordered = [self.solver] + [s for s in FALLBACK_SOLVERS if s != self.solver]
        return [s for s in ordered if s in installed]

    def _build(self, program: ConicProgram) -> Tuple[cp.Problem, cp.Variable]:
        x = cp.Variable(program.n)
        objective = program.linear @ x + program.constant
        factor = psd_factor(program.kernel)
        if factor.shape[0] > 0:
            objective = objective + cp.sum_squares(factor @ x)

        constraints: List[Any] = []
        for constraint in program.constraints:
            if isinstance(constraint, LinearEquality):
                constraints.append(constraint.A @ x == constraint.b)
            elif isinstance(constraint, BoxConstraint):
                lower = np.isfinite(constraint.lower)
                upper = np.isfinite(constraint.upper)
                if lower.any():
                    constraints.append(x[lower] >= constraint.lower[lower])
                if upper.any():
                    constraints.append(x[upper] <= constraint.upper[upper])
            elif isinstance(constraint, SecondOrderCone):
                constraints.append(cp.SOC(constraint.c @ x + constraint.d, constraint.A @ x + constraint.b))
            else:
                # ‖R x‖² <= t  <=>  ‖[2 R x; 1 - t]‖ <= 1 + t, with t = -(aᵀx + b)
                t = -(constraint.a @ x + constraint.b)
                r = psd_factor(constraint.Q)
                if r.shape[0] == 0:
                    constraints.append(t >= 0)
                else:
                    constraints.append(cp.SOC(1 + t, cp.hstack([2 * (r @ x), cp.reshape(1 - t, (1,))])))
        return cp.Problem(cp.Minimize(objective), constraints), x

    def solve(self, program: ConicProgram, tol: float = 1e-7, max_iter: int = 200) -> ConicSolution:
        problem, x = self._build(program)
        logger.debug(f"[CONIC] {program.name}: {program.n} variables, {len(program.constraints)} constraint blocks")

        fallback = ConicSolution(np.full(program.n, np.nan), "max_iter", float("inf"), float("inf"), None)
        for solver in self._candidates():
            try:
                problem.solve(solver=solver, **_solver_options(solver, tol, max_iter))
            except Exception as e:
                logger.error(f"[CONIC-ERROR] {program.name} with {solver}: {type(e).__name__}: {e}")
                continue
            status = problem.status
            logger.debug(f"[CONIC] {program.name} solved by {solver}: {status}")
            if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE, cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
                return _certificate_solution(program, solver, status, problem, x)
            if x.value is None:
                continue
            point = np.asarray(x.value, dtype=float)
            violation = constraint_violation(program, point)
            if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) and violation <= FEASIBILITY_TOL:
                return ConicSolution(point, "optimal", program.objective(point), violation, solver)
            logger.warning(f"[CONIC] {program.name}: {solver} returned {status} with violation {violation:.2e}")
            if violation < fallback.max_constraint_violation:
                fallback = ConicSolution(point, "max_iter", program.objective(point), violation, solver)
        return fallback


def _certificate_solution(
    program: ConicProgram, solver: str, status: str, problem: "cp.Problem", x: "cp.Variable"
) -> ConicSolution:
    """Infeasible or unbounded outcome with the solver status and the residual of any returned point."""
    kind = "infeasible" if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE) else "unbounded"
    point = np.full(program.n, np.nan) if x.value is None else np.asarray(x.value, dtype=float)
    residual = constraint_violation(program, point) if x.value is not None else float("inf")
    iterations = getattr(problem.solver_stats, "num_iters", None)
    detail = f"{solver} reported {status}, primal residual {residual:.3e}"
    if iterations is not None:
        detail += f" after {iterations} iterations"
    logger.warning(f"[CONIC] {program.name}: {detail}")
    return ConicSolution(point, kind, float("inf"), residual, solver, detail)


def get_backend() -> ConicBackend:
    """Get the configured conic backend.

    Returns:
        CvxpyBackend instance unless another backend was configured
    """
    global _backend_instance
    if _backend_instance is None:
        _backend_instance = CvxpyBackend()
    return _backend_instance


def configure_backend(backend: Optional[ConicBackend]) -> None:
    """Set a custom conic backend (None restores the default on next use).

    Args:
        backend: Instance of ConicBackend to use
    """
    global _backend_instance
    _backend_instance = backend


def solve(program: ConicProgram, tol: float = 1e-7, max_iter: int = 200) -> ConicSolution:
    return get_backend().solve(program, tol, max_iter)


def _constraint_document(constraint: Constraint) -> Dict[str, Any]:
    body = {key: np.asarray(value).tolist() for key, value in vars(constraint).items()}
    return {"type": type(constraint).__name__, **body}


def dump_program(program: ConicProgram, path: Union[str, "os.PathLike[str]"]) -> None:
    """Write a program as JSON for offline debugging."""
    document = {
        "name": program.name,
        "kernel": program.kernel.tolist(),
        "linear": program.linear.tolist(),
        "constant": program.constant,
        "constraints": [_constraint_document(c) for c in program.constraints],
    }
    with open(path, "w") as f:
        json.dump(document, f, indent=2)
    logger.info(f"[CONIC] Program {program.name} dumped to {path}")


def load_program(path: Union[str, "os.PathLike[str]"]) -> ConicProgram:
    with open(path) as f:
        document = json.load(f)
    kinds = {cls.__name__: cls for cls in (LinearEquality, BoxConstraint, SecondOrderCone, QuadraticInequality)}
    constraints: List[Constraint] = []
    for item in document["constraints"]:
        cls = kinds[item.pop("type")]
        constraints.append(cls(**{k: (np.asarray(v) if isinstance(v, list) else v) for k, v in item.items()}))
    n = len(document["linear"])
    return ConicProgram(
        np.asarray(document["kernel"], dtype=float).reshape(n, n),
        np.asarray(document["linear"], dtype=float),
        document["constant"],
        constraints,
        document["name"],
    )


_backend_instance: Optional[ConicBackend] = None

