"""Solver driver tests.

Step formulas are checked against hand-solved small systems and the
exact Newton step; the parallel driver must reproduce the serial loop
bit for bit when c = 1 and b = 1, and must be invariant to the thread
count.
"""

import io

import numpy as np
import pytest

from psn.linalg import make_rho_matrix
from psn.rates import CurvaturePair, b_threshold, theta, theta_cond_bound
from psn.sampling import SamplingScheme, expected_lifted_inverse
from psn.solver import (
    DivergenceError,
    SolverConfig,
    least_squares_objective,
    psn_step,
    quadratic_objective,
    run,
    run_serial,
    sn_step,
)


def random_quadratic(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    M = A @ A.T + n * np.eye(n)
    return quadratic_objective(M, rng.standard_normal(n))


def nonquadratic_objective(n, mu=0.1):
    """f(x) = ||x||^2/2 + mu * sum log cosh x_i, minimised at 0 with
    Hessians between I and (1 + mu) I."""
    from psn.solver import SmoothObjective

    def value(x):
        return float(0.5 * x @ x + mu * np.sum(np.logaddexp(x, -x) - np.log(2.0)))

    def gradient(x):
        return x + mu * np.tanh(x)

    return SmoothObjective(
        n=n,
        value=value,
        gradient=gradient,
        M=(1.0 + mu) * np.eye(n),
        G=np.eye(n),
        x_star=np.zeros(n),
        f_star=0.0,
    )


class TestObjectives:
    def test_quadratic_matches_formula(self):
        obj = random_quadratic(5, 0)
        rng = np.random.default_rng(1)
        for _ in range(5):
            x = rng.standard_normal(5)
            assert obj.value(x) == pytest.approx(0.5 * x @ (obj.M @ x) - (obj.M @ obj.x_star) @ x)
            # central finite differences as an independent gradient oracle
            g = obj.gradient(x)
            h = 1e-6
            for i in range(5):
                e = np.zeros(5)
                e[i] = h
                fd = (obj.value(x + e) - obj.value(x - e)) / (2 * h)
                assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-6)

    def test_quadratic_minimiser(self):
        obj = random_quadratic(6, 2)
        q = obj.M @ obj.x_star
        assert np.allclose(obj.x_star, np.linalg.solve(obj.M, q), atol=1e-10)
        assert obj.f_star == pytest.approx(-0.5 * q @ obj.x_star)
        assert obj.quadratic

    def test_quadratic_shape_error(self):
        with pytest.raises(ValueError):
            quadratic_objective(np.eye(3), np.zeros(4))

    def test_least_squares_matches_lstsq(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((12, 5))
        y = rng.standard_normal(12)
        obj = least_squares_objective(A, y)
        x_ref = np.linalg.lstsq(A, y, rcond=None)[0]
        assert np.allclose(obj.x_star, x_ref, atol=1e-10)
        x = rng.standard_normal(5)
        # same curve up to the constant ||y||^2/2 dropped by the quadratic form
        assert obj.value(x) == pytest.approx(0.5 * np.sum((A @ x - y) ** 2) - 0.5 * y @ y)

    def test_least_squares_rank_deficient(self):
        A = np.ones((4, 2))
        with pytest.raises(np.linalg.LinAlgError):
            least_squares_objective(A, np.ones(4))


class TestSteps:
    def test_full_set_is_newton_step(self):
        obj = random_quadratic(6, 4)
        rng = np.random.default_rng(5)
        for _ in range(3):
            x = rng.standard_normal(6)
            x1 = sn_step(x, obj, np.arange(6))
            assert np.abs(x1 - obj.x_star).max() < 1e-10

    def test_block_step_hand_solved(self):
        M = np.array([[2.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 1.5]])
        q = np.array([1.0, -2.0, 0.5])
        obj = quadratic_objective(M, q)
        x = np.array([1.0, 1.0, 1.0])
        S = np.array([0, 2])
        g = M @ x - q
        h = np.linalg.solve(M[np.ix_(S, S)], -g[S])
        expect = x.copy()
        expect[S] += h
        got = sn_step(x, obj, S)
        assert np.allclose(got, expect, atol=1e-14)
        assert got[1] == x[1]  # untouched outside the block

    def test_block_step_never_increases_quadratic(self):
        obj = random_quadratic(7, 6)
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = rng.standard_normal(7)
            S = np.sort(rng.choice(7, size=3, replace=False))
            assert obj.value(sn_step(x, obj, S)) <= obj.value(x) + 1e-12

    def test_psn_single_set_matches_serial(self):
        obj = random_quadratic(5, 8)
        x = np.arange(5, dtype=float)
        S = np.array([1, 3])
        assert np.array_equal(psn_step(x, obj, [S], 1.0), sn_step(x, obj, S))

    def test_psn_damping_scales_step(self):
        obj = random_quadratic(5, 9)
        x = np.ones(5)
        sets = [np.array([0, 1]), np.array([2, 4])]
        full = psn_step(x, obj, sets, 1.0) - x
        half = psn_step(x, obj, sets, 2.0) - x
        assert np.allclose(half, full / 2.0, atol=1e-15)

    def test_psn_aggregates_block_directions(self):
        obj = random_quadratic(6, 10)
        x = np.linspace(-1, 1, 6)
        sets = [np.array([0, 1, 2]), np.array([2, 3]), np.array([5])]
        g = obj.gradient(x)
        total = np.zeros(6)
        for S in sets:
            h = np.zeros(6)
            h[S] = np.linalg.solve(obj.M[np.ix_(S, S)], -g[S])
            total += h
        assert np.allclose(psn_step(x, obj, sets, 3.0), x + total / 3.0, atol=1e-13)

    def test_psn_validation(self):
        obj = random_quadratic(4, 11)
        with pytest.raises(ValueError):
            psn_step(np.zeros(4), obj, [np.array([0])], 0.0)
        with pytest.raises(ValueError):
            psn_step(np.zeros(4), obj, [], 1.0)


class TestRunConvergence:
    def test_serial_nice_converges(self):
        obj = random_quadratic(10, 12)
        config = SolverConfig(SamplingScheme("nice", 10, 3), b=1.0, seed=0)
        trace = run(obj, config)
        assert trace.converged
        assert trace.records[-1].grad_norm <= config.tol
        assert np.abs(trace.x - obj.x_star).max() < 1e-7
        assert trace.records[0].iteration == 0
        assert len(trace.records) == trace.iterations + 1
        gaps = [r.gap for r in trace.records]
        assert all(g is not None and g >= -1e-12 for g in gaps)

    def test_parallel_auto_damping_converges(self):
        obj = random_quadratic(8, 13)
        config = SolverConfig(
            SamplingScheme("parallel-nice", 8, 2, c=4), b="auto", theta="exact", seed=1
        )
        trace = run(obj, config)
        assert trace.converged
        pair = CurvaturePair.from_hessian(obj.M)
        E = expected_lifted_inverse(obj.M, config.scheme).matrix
        assert trace.b == pytest.approx(b_threshold(4, 1.0, theta(pair, E)), rel=1e-12)
        assert trace.theta_used == pytest.approx(theta(pair, E), rel=1e-12)

    def test_list_bound_damping_converges(self):
        obj = random_quadratic(9, 14)
        config = SolverConfig(
            SamplingScheme("parallel-list", 9, 3, c=3), b="auto", theta="bound", seed=2
        )
        trace = run(obj, config)
        assert trace.converged
        expect_b = b_threshold(3, 1.0, theta_cond_bound(3, obj.M))
        assert trace.b == pytest.approx(expect_b, rel=1e-12)

    def test_non_overlapping_converges(self):
        obj = random_quadratic(8, 15)
        config = SolverConfig(
            SamplingScheme("non-overlapping", 8, 2, c=4), b=1.0, seed=3
        )
        assert run(obj, config).converged

    def test_nonquadratic_converges_to_zero(self):
        obj = nonquadratic_objective(6)
        config = SolverConfig(
            SamplingScheme("parallel-nice", 6, 2, c=2), b="auto", theta="exact", seed=4
        )
        trace = run(obj, config)
        assert trace.converged
        assert np.abs(trace.x).max() < 1e-7
        # auto damping folds in lambda = lambda_max(G^{-1/2} M G^{-1/2}) = 1.1
        E = expected_lifted_inverse(obj.M, config.scheme).matrix
        th = theta(obj.curvature(), E)
        assert trace.b == pytest.approx(1.0 + 1.1 * th, rel=1e-9)

    def test_max_iterations_status(self):
        obj = random_quadratic(10, 16)
        config = SolverConfig(SamplingScheme("nice", 10, 1), b=1.0, max_iter=3)
        trace = run(obj, config)
        assert not trace.converged
        assert trace.status == "max-iterations"
        assert len(trace.records) == 4


class TestDeterminism:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    @pytest.mark.parametrize("kind", ["nice", "list"])
    def test_parallel_driver_reproduces_serial_loop(self, kind, seed):
        obj = random_quadratic(9, 40 + seed)
        config = SolverConfig(SamplingScheme(kind, 9, 2), b=1.0, seed=seed, max_iter=400)
        a = run(obj, config)
        b = run_serial(obj, config)
        assert a.status == b.status
        assert np.array_equal(a.x, b.x)
        assert [r.value for r in a.records] == [r.value for r in b.records]
        assert [r.grad_norm for r in a.records] == [r.grad_norm for r in b.records]

    def test_thread_count_does_not_change_trace(self):
        obj = random_quadratic(10, 43)
        base = None
        for threads in (1, 2, 4):
            config = SolverConfig(
                SamplingScheme("parallel-nice", 10, 2, c=3),
                b=2.0,
                seed=5,
                threads=threads,
                max_iter=300,
            )
            trace = run(obj, config)
            values = [r.value for r in trace.records]
            if base is None:
                base = (values, trace.x)
            else:
                assert values == base[0]
                assert np.array_equal(trace.x, base[1])

    def test_block_cache_does_not_change_trace(self):
        obj = random_quadratic(8, 44)
        kwargs = dict(b=1.0, seed=6, max_iter=300)
        plain = run(obj, SolverConfig(SamplingScheme("nice", 8, 2), **kwargs))
        cached = run(
            obj, SolverConfig(SamplingScheme("nice", 8, 2), cache_blocks=True, **kwargs)
        )
        assert np.array_equal(plain.x, cached.x)
        assert [r.value for r in plain.records] == [r.value for r in cached.records]

    def test_same_seed_same_trace(self):
        obj = random_quadratic(8, 45)
        config = SolverConfig(SamplingScheme("parallel-nice", 8, 2, c=2), b=1.5, seed=7)
        assert np.array_equal(run(obj, config).x, run(obj, config).x)


class TestIncrementalGradient:
    def test_converges_and_matches_direct_solution(self):
        obj = random_quadratic(12, 46)
        scheme = SamplingScheme("parallel-nice", 12, 3, c=2)
        fast = run(obj, SolverConfig(scheme, b=1.5, seed=8, incremental_gradient=True))
        slow = run(obj, SolverConfig(scheme, b=1.5, seed=8))
        assert fast.converged and slow.converged
        assert np.abs(fast.x - obj.x_star).max() < 1e-7
        # same sampling path, so the trajectories agree to round-off
        assert np.abs(fast.x - slow.x).max() < 1e-6

    def test_ignored_for_nonquadratic(self):
        obj = nonquadratic_objective(5)
        config = SolverConfig(
            SamplingScheme("nice", 5, 2), b=1.0, seed=9, incremental_gradient=True
        )
        assert run(obj, config).converged


class TestGuards:
    def test_divergence_raises(self):
        # c full-block directions with b = 1 triple the Newton step:
        # x' - x* = -2 (x - x*), so the objective rises every iteration.
        obj = random_quadratic(6, 47)
        config = SolverConfig(
            SamplingScheme("parallel-nice", 6, 6, c=3),
            b=1.0,
            seed=10,
            x0=obj.x_star + 1.0,
            max_iter=10_000,
        )
        with pytest.raises(DivergenceError, match="damping"):
            run(obj, config)

    def test_explicit_b_below_one_rejected(self):
        obj = random_quadratic(5, 48)
        config = SolverConfig(SamplingScheme("nice", 5, 2), b=0.5)
        with pytest.raises(ValueError, match="at least 1"):
            run(obj, config)

    def test_auto_without_theta_rejected(self):
        obj = random_quadratic(5, 49)
        with pytest.raises(ValueError, match="theta"):
            run(obj, SolverConfig(SamplingScheme("nice", 5, 2), b="auto"))

    def test_bound_theta_requires_list(self):
        obj = random_quadratic(5, 50)
        config = SolverConfig(SamplingScheme("nice", 5, 2), b="auto", theta="bound")
        with pytest.raises(ValueError, match="list"):
            run(obj, config)

    def test_dimension_mismatch(self):
        obj = random_quadratic(5, 51)
        with pytest.raises(ValueError, match="dimension"):
            run(obj, SolverConfig(SamplingScheme("nice", 6, 2), b=1.0))

    def test_x0_respected_and_validated(self):
        obj = random_quadratic(5, 52)
        x0 = np.full(5, 2.0)
        trace = run(obj, SolverConfig(SamplingScheme("nice", 5, 2), b=1.0, x0=x0))
        assert trace.records[0].value == pytest.approx(obj.value(x0))
        with pytest.raises(ValueError):
            run(obj, SolverConfig(SamplingScheme("nice", 5, 2), b=1.0, x0=np.zeros(4)))

    def test_run_serial_rejects_parallel_scheme(self):
        obj = random_quadratic(6, 53)
        config = SolverConfig(SamplingScheme("parallel-nice", 6, 2, c=2), b=1.0)
        with pytest.raises(ValueError, match="serial"):
            run_serial(obj, config)


class TestTraceCsv:
    def test_columns_and_blank_gap(self):
        from dataclasses import replace

        obj = nonquadratic_objective(4)
        obj = replace(obj, x_star=None, f_star=None)  # optimum unknown
        trace = run(obj, SolverConfig(SamplingScheme("nice", 4, 2), b=1.0, max_iter=5))
        buf = io.StringIO()
        trace.write_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "iteration,f_gap,grad_norm,elapsed_seconds"
        assert len(lines) == len(trace.records) + 1
        assert all(line.split(",")[1] == "" for line in lines[1:])
        assert "\r" not in buf.getvalue()

    def test_elapsed_excluded(self):
        obj = random_quadratic(4, 54)
        trace = run(obj, SolverConfig(SamplingScheme("nice", 4, 2), b=1.0, max_iter=5))
        buf = io.StringIO()
        trace.write_csv(buf, include_elapsed=False)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "iteration,f_gap,grad_norm"
        first = lines[1].split(",")
        assert first[0] == "0"
        assert float(first[1]) == pytest.approx(
            trace.records[0].gap, rel=1e-15
        )

    def test_round_trip_precision(self):
        obj = random_quadratic(4, 55)
        trace = run(obj, SolverConfig(SamplingScheme("nice", 4, 2), b=1.0, max_iter=8))
        buf = io.StringIO()
        trace.write_csv(buf, include_elapsed=False)
        rows = buf.getvalue().splitlines()[1:]
        for row, rec in zip(rows, trace.records):
            _, gap, gnorm = row.split(",")
            assert float(gap) == rec.gap  # repr round-trips exactly
            assert float(gnorm) == rec.grad_norm
