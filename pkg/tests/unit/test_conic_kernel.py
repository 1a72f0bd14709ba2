"""Unit tests for the conic kernel and its solver backend."""

import numpy as np
import pytest
from secure_cra_isac.conic_kernel import (
    BoxConstraint,
    ConicBackend,
    ConicProgram,
    ConicSolution,
    CvxpyBackend,
    LinearEquality,
    QuadraticInequality,
    SecondOrderCone,
    configure_backend,
    constraint_violation,
    dump_program,
    get_backend,
    load_program,
    psd_factor,
    solve,
)
from secure_cra_isac.errors import ConicProgramError


class TestConicProgram:
    """Test program validation."""

    def test_non_psd_kernel_rejected(self):
        """A kernel with a negative eigenvalue raises ConicProgramError."""
        with pytest.raises(ConicProgramError):
            ConicProgram(np.diag([1.0, -1.0]), np.zeros(2))

    def test_kernel_shape_checked(self):
        """Kernel and linear term must agree on the variable count."""
        with pytest.raises(ConicProgramError):
            ConicProgram(np.eye(3), np.zeros(2))

    def test_constraint_dimensions_checked(self):
        """Constraints sized for another variable count are rejected."""
        box = BoxConstraint(np.zeros(3), np.ones(3))
        with pytest.raises(ConicProgramError):
            ConicProgram(np.eye(2), np.zeros(2), constraints=[box])

    def test_kernel_symmetrized(self):
        """The stored kernel is the symmetric part of the input."""
        program = ConicProgram(np.array([[1.0, 2.0], [0.0, 4.0]]), np.zeros(2))
        np.testing.assert_allclose(program.kernel, [[1.0, 1.0], [1.0, 4.0]])

    def test_objective_value(self):
        """objective() evaluates xᵀKx + linearᵀx + constant."""
        program = ConicProgram(np.eye(2), np.array([1.0, -1.0]), constant=3.0)
        assert program.objective(np.array([1.0, 2.0])) == pytest.approx(5.0 - 1.0 + 3.0)


class TestHelpers:
    """Test PSD factorization and violation measurement."""

    def test_psd_factor_definite(self):
        """Rᵀ R reproduces a positive definite matrix."""
        A = np.array([[4.0, 1.0], [1.0, 3.0]])
        R = psd_factor(A)
        np.testing.assert_allclose(R.T @ R, A, atol=1e-12)

    def test_psd_factor_singular(self):
        """Singular PSD matrices factor through their positive eigenpairs."""
        v = np.array([1.0, 2.0, -1.0])
        A = np.outer(v, v)
        R = psd_factor(A)
        assert R.shape[0] == 1
        np.testing.assert_allclose(R.T @ R, A, atol=1e-10)

    def test_violation_of_box(self):
        """Box violation is the largest excursion outside the bounds."""
        program = ConicProgram(np.zeros((2, 2)), np.zeros(2), constraints=[BoxConstraint(np.zeros(2), np.ones(2))])
        assert constraint_violation(program, np.array([0.5, 1.25])) == pytest.approx(0.25)
        assert constraint_violation(program, np.array([0.5, 0.5])) == 0.0


class TestCvxpyBackend:
    """Test solving through cvxpy."""

    def test_box_qp(self):
        """min x² - 2x over [0, 0.5] ends at the upper bound."""
        program = ConicProgram(
            np.eye(1), np.array([-2.0]), constraints=[BoxConstraint(np.zeros(1), np.array([0.5]))], name="box"
        )
        solution = CvxpyBackend().solve(program)
        assert solution.status == "optimal"
        assert solution.x[0] == pytest.approx(0.5, abs=1e-5)

    def test_second_order_cone(self):
        """max x1 + x2 over the unit ball is attained at (1, 1)/√2."""
        cone = SecondOrderCone(np.eye(2), np.zeros(2), np.zeros(2), 1.0)
        program = ConicProgram(np.zeros((2, 2)), np.array([-1.0, -1.0]), constraints=[cone])
        solution = CvxpyBackend().solve(program)
        assert solution.status == "optimal"
        np.testing.assert_allclose(solution.x, [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-5)
        assert solution.objective_value == pytest.approx(-np.sqrt(2), abs=1e-5)

    def test_quadratic_inequality(self):
        """max x1 subject to x1² + x2² <= 1 reaches x1 = 1."""
        disc = QuadraticInequality(np.eye(2), np.zeros(2), -1.0)
        program = ConicProgram(np.zeros((2, 2)), np.array([-1.0, 0.0]), constraints=[disc])
        solution = CvxpyBackend().solve(program)
        assert solution.status == "optimal"
        assert solution.x[0] == pytest.approx(1.0, abs=1e-4)

    def test_infeasible_program(self):
        """x = 2 inside [0, 1] is reported as infeasible, not raised."""
        constraints = [
            LinearEquality(np.ones((1, 1)), np.array([2.0])),
            BoxConstraint(np.zeros(1), np.ones(1)),
        ]
        program = ConicProgram(np.eye(1), np.zeros(1), constraints=constraints)
        solution = CvxpyBackend().solve(program)
        assert solution.status == "infeasible"
        assert np.all(np.isnan(solution.x))
        assert solution.solver in solution.detail
        assert "infeasible" in solution.detail.lower()
        assert "primal residual" in solution.detail

    def test_solver_from_environment(self, monkeypatch):
        """CRA_ISAC_SOLVER selects the preferred solver."""
        monkeypatch.setenv("CRA_ISAC_SOLVER", "scs")
        assert CvxpyBackend().solver == "SCS"

    def test_is_available_returns_boolean(self):
        """is_available returns boolean value."""
        assert isinstance(CvxpyBackend().is_available(), bool)


class _FixedBackend(ConicBackend):
    def solve(self, program, tol=1e-7, max_iter=200):
        return ConicSolution(np.zeros(program.n), "optimal", 0.0, 0.0, "fixed")

    def is_available(self):
        return True


class TestBackendModule:
    """Test module-level backend selection."""

    def test_cannot_instantiate_abstract_class(self):
        """ConicBackend is abstract and cannot be instantiated."""
        with pytest.raises(TypeError):
            ConicBackend()

    def test_get_backend_singleton(self):
        """get_backend returns the same default instance."""
        assert get_backend() is get_backend()
        assert isinstance(get_backend(), CvxpyBackend)

    def test_configure_backend(self):
        """configure_backend swaps the backend used by solve()."""
        configure_backend(_FixedBackend())
        solution = solve(ConicProgram(np.eye(2), np.ones(2)))
        assert solution.solver == "fixed"
        configure_backend(None)
        assert isinstance(get_backend(), CvxpyBackend)

    def test_dump_and_load_program(self, tmp_path):
        """A dumped program loads back with the same objective and constraints."""
        constraints = [
            SecondOrderCone(np.eye(2), np.zeros(2), np.zeros(2), 1.0),
            BoxConstraint(np.zeros(2), np.ones(2)),
        ]
        program = ConicProgram(np.eye(2), np.array([1.0, -2.0]), 0.5, constraints, name="dumped")
        path = tmp_path / "program.json"
        dump_program(program, path)
        loaded = load_program(path)
        assert loaded.name == "dumped"
        assert len(loaded.constraints) == 2
        x = np.array([0.3, 0.4])
        assert loaded.objective(x) == pytest.approx(program.objective(x))
