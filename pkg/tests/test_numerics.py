import numpy as np
import pytest

from cranopt.numerics import (
    HermitianForm,
    NumericsError,
    QuadraticConstraint,
    solve_hpd,
    solve_qcqp,
)

from oracles import qcqp_reference


def _random_psd_forms(rng, K, n, rank=None):
    rank = rank or n
    G = rng.standard_normal((K, n, rank)) + 1j * rng.standard_normal((K, n, rank))
    A = G @ G.conj().transpose(0, 2, 1) / rank
    b = rng.standard_normal((K, n)) + 1j * rng.standard_normal((K, n))
    return A, b


class TestSolveHpd:
    def test_identity(self, rng):
        v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        assert np.allclose(solve_hpd(np.eye(4), v), v)

    def test_scalar_scaling(self):
        x = solve_hpd(2.0 * np.eye(2), np.array([2.0, 0.0]))
        assert np.allclose(x, [1.0, 0.0])

    def test_construct_then_solve(self, rng):
        G = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        M = G @ G.conj().T + 0.5 * np.eye(8)
        x_true = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        x = solve_hpd(M, M @ x_true)
        assert np.linalg.norm(x - x_true) <= 1e-9 * np.linalg.norm(x_true)

    def test_rejects_indefinite(self):
        M = np.diag([1.0, -1.0])
        with pytest.raises(NumericsError):
            solve_hpd(M, np.ones(2))


class TestHermitianForm:
    def test_validate_rejects_non_hermitian(self, rng):
        A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        with pytest.raises(NumericsError):
            HermitianForm(A=A, b=np.zeros(3)).validate()

    def test_validate_accepts_psd(self, rng):
        A, b = _random_psd_forms(rng, 1, 4)
        HermitianForm(A=A[0], b=b[0]).validate()


class TestSolveQcqp:
    def test_unconstrained_minimum(self):
        A = np.eye(2, dtype=complex)[None]
        b = np.array([[2.0, 0.0]], dtype=complex)
        sol = solve_qcqp((A, b), [])
        assert np.allclose(sol.w, [[1.0, 0.0]], atol=1e-9)
        assert sol.objective == pytest.approx(-1.0, abs=1e-9)

    def test_ball_constraint_projects(self):
        A = np.eye(2, dtype=complex)[None]
        b = np.array([[2.0, 0.0]], dtype=complex)
        cons = [QuadraticConstraint(1.0, np.ones(2), 0.25)]
        sol = solve_qcqp((A, b), cons)
        assert np.allclose(sol.w, [[0.5, 0.0]], atol=1e-6)
        assert sol.objective == pytest.approx(-0.75, abs=1e-6)
        # hand KKT: (A + lambda I) w = b/2 with ||w||^2 = 0.25 gives lambda = 1
        assert sol.multipliers[0] == pytest.approx(1.0, rel=1e-4)
        assert sol.converged

    def test_infinite_bounds_give_unconstrained(self, rng):
        A, b = _random_psd_forms(rng, 3, 4)
        A += 0.3 * np.eye(4)
        cons = [QuadraticConstraint(1.0, np.ones(4), np.inf)]
        sol = solve_qcqp((A, b), cons)
        expected = np.linalg.solve(A, b[..., None])[..., 0] / 2.0
        assert np.allclose(sol.w, expected, atol=1e-7)

    def test_zero_bound_pins_coefficients(self, rng):
        A, b = _random_psd_forms(rng, 2, 3)
        cons = [
            QuadraticConstraint(1.0, np.array([1.0, 0.0, 0.0]), 0.0),
            QuadraticConstraint(1.0, np.ones(3), 5.0),
        ]
        sol = solve_qcqp((A, b), cons)
        assert np.abs(sol.w[:, 0]).max() == 0.0

    def test_pins_respected(self, rng):
        A, b = _random_psd_forms(rng, 2, 4)
        pins = np.zeros((2, 4), dtype=bool)
        pins[0, 1] = True
        pins[1, 3] = True
        sol = solve_qcqp((A, b), [QuadraticConstraint(1.0, np.ones(4), 3.0)], pins=pins)
        assert sol.w[0, 1] == 0 and sol.w[1, 3] == 0

    def test_matches_reference_solver(self, rng):
        for trial in range(5):
            A, b = _random_psd_forms(rng, 2, 4, rank=2)
            # per-coefficient power constraints plus one coupled constraint
            cons = [QuadraticConstraint(1.0, np.eye(4)[i], 0.5) for i in range(4)]
            cons.append(QuadraticConstraint(rng.uniform(0.5, 2.0, 2), np.ones(4), 1.0, kind="backhaul"))
            sol = solve_qcqp((A, b), cons)
            ref_obj, _ = qcqp_reference(A, b, cons)
            scale = max(1.0, abs(ref_obj))
            assert abs(sol.objective - ref_obj) / scale < 1e-3
            assert sol.max_violation_rel <= 1e-6
            assert (sol.multipliers >= 0).all()
            assert sol.comp_slackness <= 1e-5

    def test_warm_start_consistency(self, rng):
        A, b = _random_psd_forms(rng, 3, 4)
        cons = [QuadraticConstraint(1.0, np.eye(4)[i], 0.4) for i in range(4)]
        cold = solve_qcqp((A, b), cons)
        warm = solve_qcqp((A, b), cons, warm=cold.warm)
        assert np.allclose(cold.w, warm.w, atol=1e-6)
        assert warm.n_dual_evals <= cold.n_dual_evals

    def test_zero_b_returns_zero(self, rng):
        A, _ = _random_psd_forms(rng, 2, 3)
        b = np.zeros((2, 3), dtype=complex)
        sol = solve_qcqp((A, b), [QuadraticConstraint(1.0, np.ones(3), 1.0)])
        assert np.abs(sol.w).max() == 0.0
        assert sol.converged

    def test_dual_feasibility_and_slacks_random(self, rng):
        for trial in range(10):
            K, n = 3, 5
            A, b = _random_psd_forms(rng, K, n)
            cons = [QuadraticConstraint(1.0, np.eye(n)[i], rng.uniform(0.05, 0.5)) for i in range(n)]
            cons.append(QuadraticConstraint(rng.uniform(0.1, 1.0, K), np.ones(n),
                                            rng.uniform(0.2, 1.0), kind="backhaul"))
            sol = solve_qcqp((A, b), cons)
            assert (sol.multipliers >= 0).all()
            assert sol.max_violation_rel <= 1e-6
            assert sol.comp_slackness <= 1e-5
            assert sol.stationarity <= 1e-5
            # at the returned multipliers the reported usages reproduce the slacks
            recompute = [float(np.einsum("k,i,ki->", np.broadcast_to(c.user_weights, (K,)),
                                         c.coef_weights, np.abs(sol.w) ** 2)) for c in cons]
            assert np.allclose(recompute, sol.usage, rtol=1e-12, atol=1e-15)
