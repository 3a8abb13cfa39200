"""Stochastic Newton iterations driven by block samplings.

The model problem is min f(x) for smooth strongly convex f whose
Hessians are bounded by a fixed symmetric positive definite matrix M
(above) and G (below).  One serial step picks an index set S and moves

    x' = x - lifted_inverse(M, S) @ grad f(x),

i.e. a Newton-type step restricted to the sampled block.  The parallel
variant aggregates c such blocks with damping b:

    x' = x + (1/b) * sum_i h_i,    M[S_i, S_i] h_i[S_i] = -grad[S_i].

All randomness flows from a single master seed on the coordinator;
worker threads only execute block solves, so traces are identical for
any physical thread count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .linalg import check_index_set, check_symmetric, solve_pd
from .rates import CurvaturePair, b_threshold, lambda_ratio, theta, theta_cond_bound
from .sampling import SamplingScheme, draw, expected_lifted_inverse

__all__ = [
    "DivergenceError",
    "SmoothObjective",
    "quadratic_objective",
    "least_squares_objective",
    "sn_step",
    "psn_step",
    "SolverConfig",
    "TraceRecord",
    "IterationTrace",
    "run",
    "run_serial",
]

# Consecutive objective increases tolerated before giving up.
_DIVERGENCE_PATIENCE = 100


class DivergenceError(RuntimeError):
    """Raised when the objective keeps increasing, which normally means
    the damping b was set below the admissible threshold."""


@dataclass(frozen=True)
class SmoothObjective:
    """Smooth strongly convex objective with curvature bounds.

    value/gradient are plain callables on length-n vectors.  M bounds
    the Hessians from above and G from below in the semidefinite order;
    block steps always solve against M.  x_star/f_star are optional and
    only used to report optimality gaps in traces.
    """

    n: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    M: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    x_star: np.ndarray | None = field(default=None, repr=False)
    f_star: float | None = None
    quadratic: bool = False

    def curvature(self) -> CurvaturePair:
        if self.quadratic:
            return CurvaturePair.from_hessian(self.M)
        return CurvaturePair(self.M, self.G)


def quadratic_objective(M: np.ndarray, q: np.ndarray) -> SmoothObjective:
    """Objective f(x) = x'Mx/2 - q'x for positive definite M.

    The minimiser M^{-1} q and optimal value are computed on
    construction and checked: the gradient at x_star must come out
    below 1e-8 in norm (relative to ||q||).
    """
    M = check_symmetric(M)
    q = np.asarray(q, dtype=np.float64)
    n = M.shape[0]
    if q.shape != (n,):
        raise ValueError(f"q must have shape ({n},), got {q.shape}")
    x_star = solve_pd(M, q)
    g_star = M @ x_star - q
    if np.linalg.norm(g_star) > 1e-8 * max(1.0, np.linalg.norm(q)):
        raise np.linalg.LinAlgError(
            "minimiser verification failed: gradient norm "
            f"{np.linalg.norm(g_star):.3e} at the computed optimum"
        )

    def value(x: np.ndarray) -> float:
        return float(0.5 * x @ (M @ x) - q @ x)

    def gradient(x: np.ndarray) -> np.ndarray:
        return M @ x - q

    return SmoothObjective(
        n=n,
        value=value,
        gradient=gradient,
        M=M,
        G=M,
        x_star=x_star,
        f_star=value(x_star),
        quadratic=True,
    )


def least_squares_objective(A: np.ndarray, y: np.ndarray) -> SmoothObjective:
    """Objective f(x) = ||A x - y||^2 / 2, a quadratic with Hessian A'A.

    Requires A to have full column rank so that A'A is positive
    definite.
    """
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"A must be a matrix, got shape {A.shape}")
    if y.shape != (A.shape[0],):
        raise ValueError(f"y must have shape ({A.shape[0]},), got {y.shape}")
    M = A.T @ A
    M = 0.5 * (M + M.T)
    return quadratic_objective(M, A.T @ y)


def _block_direction(
    M: np.ndarray,
    g: np.ndarray,
    S: np.ndarray,
    cache: dict | None = None,
) -> np.ndarray:
    """Newton direction of one block: zero outside S, and on S the
    solution of M[S, S] h = -g[S]."""
    key = tuple(S.tolist())
    factor = cache.get(key) if cache is not None else None
    if factor is None:
        try:
            factor = scipy.linalg.cho_factor(
                M[np.ix_(S, S)], lower=True, check_finite=False
            )
        except scipy.linalg.LinAlgError as err:
            raise np.linalg.LinAlgError(
                f"block {S.tolist()} is not positive definite: {err}"
            ) from err
        if cache is not None:
            cache[key] = factor
    h = np.zeros_like(g)
    h[S] = -scipy.linalg.cho_solve(factor, g[S], check_finite=False)
    return h


def sn_step(x: np.ndarray, objective: SmoothObjective, S) -> np.ndarray:
    """One serial stochastic Newton step on the index set S."""
    x = np.asarray(x, dtype=np.float64)
    idx = check_index_set(S, objective.n)
    g = objective.gradient(x)
    return x + _block_direction(objective.M, g, idx)


def psn_step(x: np.ndarray, objective: SmoothObjective, sets, b: float) -> np.ndarray:
    """One parallel step aggregating the block directions of ``sets``
    with damping b: x + (1/b) sum_i h_i."""
    x = np.asarray(x, dtype=np.float64)
    if b <= 0.0:
        raise ValueError(f"damping b must be positive, got {b}")
    idx_sets = [check_index_set(S, objective.n) for S in sets]
    if not idx_sets:
        raise ValueError("need at least one index set")
    g = objective.gradient(x)
    total = _block_direction(objective.M, g, idx_sets[0])
    for S in idx_sets[1:]:
        total += _block_direction(objective.M, g, S)
    return x + total / b


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters.

    b is either an explicit positive damping or "auto", which sets
    b = (c-1)*lambda*theta + 1.  Auto mode needs a theta source: a
    number, "exact" (enumerate the expected lifted inverse), or "bound"
    ((tau/n) cond(M), list samplings with M == G only).  There is no
    silent default.

    incremental_gradient switches quadratic objectives to rank-tau
    gradient updates with a full recompute every refresh_every
    iterations; it changes round-off, not semantics, and is off by
    default so that step-for-step comparisons stay exact.
    """

    scheme: SamplingScheme
    b: float | str = "auto"
    theta: float | str | None = None
    tol: float = 1e-8
    max_iter: int = 100_000
    seed: int = 0
    threads: int = 1
    x0: np.ndarray | None = field(default=None, repr=False)
    cache_blocks: bool = False
    incremental_gradient: bool = False
    refresh_every: int = 250


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    value: float
    gap: float | None
    grad_norm: float
    elapsed: float


@dataclass
class IterationTrace:
    """Per-iteration convergence record of one run."""

    records: list[TraceRecord]
    status: str
    x: np.ndarray
    b: float
    theta_used: float | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration

    def write_csv(self, path_or_file, include_elapsed: bool = True) -> None:
        """Write the trace as CSV with columns iteration, f_gap (blank
        when the optimum is unknown), grad_norm and, unless disabled,
        elapsed_seconds.  Timing is excluded by callers that need
        byte-identical output across runs."""
        import csv

        close = False
        if hasattr(path_or_file, "write"):
            fh = path_or_file
        else:
            fh = open(path_or_file, "w", newline="")
            close = True
        try:
            writer = csv.writer(fh, lineterminator="\n")
            header = ["iteration", "f_gap", "grad_norm"]
            if include_elapsed:
                header.append("elapsed_seconds")
            writer.writerow(header)
            for rec in self.records:
                row = [
                    rec.iteration,
                    "" if rec.gap is None else repr(rec.gap),
                    repr(rec.grad_norm),
                ]
                if include_elapsed:
                    row.append(repr(rec.elapsed))
                writer.writerow(row)
        finally:
            if close:
                fh.close()


def _resolve_theta(objective: SmoothObjective, config: SolverConfig) -> float:
    spec = config.theta
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        value = float(spec)
        if value <= 0.0:
            raise ValueError(f"theta must be positive, got {value}")
        return value
    if spec == "exact":
        pair = objective.curvature()
        E = expected_lifted_inverse(objective.M, config.scheme).matrix
        return theta(pair, E)
    if spec == "bound":
        if config.scheme.serial_kind != "list":
            raise ValueError(
                "theta='bound' uses (tau/n) cond(M), which covers list "
                "samplings only; supply a numeric theta or 'exact'"
            )
        if not objective.quadratic:
            raise ValueError("theta='bound' requires a quadratic objective (M == G)")
        return theta_cond_bound(config.scheme.tau, objective.M)
    raise ValueError(
        "b='auto' needs an explicit theta source: a number, 'exact', or "
        "'bound' (no silent default)"
    )


def _resolve_b(objective: SmoothObjective, config: SolverConfig) -> tuple[float, float | None]:
    if config.b == "auto":
        lam = 1.0 if objective.quadratic else lambda_ratio(objective.curvature())
        th = _resolve_theta(objective, config)
        return b_threshold(config.scheme.c, lam, th), th
    b = float(config.b)
    if b < 1.0:
        raise ValueError(f"explicit damping b must be at least 1, got {b}")
    return b, None


def _initial_point(objective: SmoothObjective, config: SolverConfig) -> np.ndarray:
    if config.x0 is None:
        return np.zeros(objective.n)
    x0 = np.asarray(config.x0, dtype=np.float64)
    if x0.shape != (objective.n,):
        raise ValueError(f"x0 must have shape ({objective.n},), got {x0.shape}")
    return x0.copy()


def run(objective: SmoothObjective, config: SolverConfig) -> IterationTrace:
    """Run the damped parallel iteration until ||grad|| <= tol.

    The trace records every iterate including the initial point.  A
    DivergenceError is raised if the objective value increases for 100
    consecutive iterations, which indicates b below the admissible
    threshold.
    """
    if config.scheme.n != objective.n:
        raise ValueError(
            f"scheme dimension {config.scheme.n} does not match objective n={objective.n}"
        )
    if config.tol < 0.0:
        raise ValueError(f"tolerance must be non-negative, got {config.tol}")
    b, theta_used = _resolve_b(objective, config)
    rng = np.random.default_rng(config.seed)
    x = _initial_point(objective, config)
    cache: dict | None = {} if config.cache_blocks else None
    incremental = config.incremental_gradient and objective.quadratic
    # With a maintained gradient and a known optimum the quadratic value
    # is f* + (x - x*)'g/2, which avoids a dense matvec per iteration.
    fast_value = (
        incremental
        and objective.x_star is not None
        and objective.f_star is not None
    )

    records: list[TraceRecord] = []
    status = "max-iterations"
    t0 = time.perf_counter()
    prev_value = np.inf
    rises = 0
    g = objective.gradient(x)

    executor = (
        ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    )
    try:
        for k in range(config.max_iter + 1):
            if fast_value:
                f = objective.f_star + 0.5 * float((x - objective.x_star) @ g)
            else:
                f = objective.value(x)
            gap = None if objective.f_star is None else f - objective.f_star
            gnorm = float(np.linalg.norm(g))
            records.append(
                TraceRecord(k, f, gap, gnorm, time.perf_counter() - t0)
            )
            if gnorm <= config.tol:
                status = "converged"
                break
            if f > prev_value:
                rises += 1
                if rises >= _DIVERGENCE_PATIENCE:
                    raise DivergenceError(
                        f"objective increased for {rises} consecutive iterations; "
                        "the damping b is likely below the admissible threshold "
                        "(c-1)*lambda*theta + 1"
                    )
            else:
                rises = 0
            prev_value = f
            if k == config.max_iter:
                break

            sets = draw(config.scheme, rng)
            if executor is not None:
                directions = list(
                    executor.map(lambda S: _block_direction(objective.M, g, S, cache), sets)
                )
            else:
                directions = [_block_direction(objective.M, g, S, cache) for S in sets]
            total = directions[0]
            for h in directions[1:]:
                total += h
            step = total / b
            x = x + step
            if incremental:
                if (k + 1) % config.refresh_every == 0:
                    g = objective.gradient(x)
                else:
                    changed = np.unique(np.concatenate(sets))
                    g = g + objective.M[:, changed] @ step[changed]
            else:
                g = objective.gradient(x)
    finally:
        if executor is not None:
            executor.shutdown()

    return IterationTrace(records, status, x, b, theta_used)


def run_serial(objective: SmoothObjective, config: SolverConfig) -> IterationTrace:
    """Reference serial loop built directly on sn_step.

    Requires a serial scheme (c = 1).  With b = 1 the parallel driver
    reproduces this trajectory step for step under the same seed.
    """
    if config.scheme.c != 1 or config.scheme.kind not in ("nice", "list"):
        raise ValueError("run_serial requires a serial scheme (kind nice/list, c=1)")
    if config.tol < 0.0:
        raise ValueError(f"tolerance must be non-negative, got {config.tol}")
    rng = np.random.default_rng(config.seed)
    x = _initial_point(objective, config)
    records: list[TraceRecord] = []
    status = "max-iterations"
    t0 = time.perf_counter()
    for k in range(config.max_iter + 1):
        f = objective.value(x)
        gap = None if objective.f_star is None else f - objective.f_star
        gnorm = float(np.linalg.norm(objective.gradient(x)))
        records.append(TraceRecord(k, f, gap, gnorm, time.perf_counter() - t0))
        if gnorm <= config.tol:
            status = "converged"
            break
        if k == config.max_iter:
            break
        (S,) = draw(config.scheme, rng)
        x = sn_step(x, objective, S)
    return IterationTrace(records, status, x, 1.0, None)
