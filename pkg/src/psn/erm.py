"""Dual block-Newton solver for regularised empirical risk minimisation.

The primal problem over weights w in R^d, with feature columns a_i and
convex per-example losses phi_i that are gamma_i-strongly convex,

    P(w) = (1/n) sum_i phi_i(a_i' w, y_i) + (lam/2) ||w||^2,

has the dual over alpha in R^n

    D(alpha) = -(1/n) sum_i phi_i*(-alpha_i, y_i) - (lam/2) ||abar||^2,
    abar = (1/(lam n)) A alpha,      w = abar,

and -D is smooth with Hessian bound

    X = (1/(lam n^2)) A'A + diag(1/gamma_i)/n.

Each iteration samples index sets, solves the Newton block system

    X[S, S] h[S] = -((1/n) A'w + grad psi(alpha))[S],
    psi_i(alpha_i) = (1/n) phi_i*(-alpha_i, y_i),

and aggregates the blocks with damping b exactly like the primal
solver.  The running average abar is updated incrementally and must
stay equal to (1/(lam n)) A alpha up to round-off; traces record the
drift so the invariant is observable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special

from .linalg import check_index_set
from .rates import CurvaturePair, b_threshold, lambda_ratio, theta, theta_cond_bound
from .sampling import draw, expected_lifted_inverse
from .solver import SolverConfig

__all__ = [
    "SquaredLoss",
    "LogisticLoss",
    "ErmProblem",
    "DualState",
    "primal_from_dual",
    "block_subproblem",
    "ErmRecord",
    "ErmTrace",
    "run_erm",
    "load_libsvm",
]


class SquaredLoss:
    """phi(z, y) = (z - y)^2 / 2, with closed-form conjugate."""

    gamma = 1.0       # strong convexity in z
    smoothness = 1.0  # Lipschitz constant of the derivative

    @staticmethod
    def value(z, y):
        return 0.5 * (z - y) ** 2

    @staticmethod
    def derivative(z, y):
        return z - y

    @staticmethod
    def conjugate(s, y):
        return 0.5 * s**2 + s * y

    @staticmethod
    def conjugate_derivative(s, y):
        return s + y


@dataclass(frozen=True)
class LogisticLoss:
    """Logistic loss with quadratic smoothing for labels y in {-1, +1}:

        phi(z, y) = log(1 + exp(-y z)) + (epsilon/2) z^2.

    The epsilon term makes phi strongly convex so the dual blocks stay
    positive definite; the conjugate has no closed form and is
    evaluated by a safeguarded elementwise Newton iteration on
    phi'(z) = s (phi' is strictly increasing, so the root is unique and
    bracketed by |z| <= (|s| + 1)/epsilon + 1).
    """

    epsilon: float = 1e-3

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def gamma(self) -> float:
        return self.epsilon

    @property
    def smoothness(self) -> float:
        return 0.25 + self.epsilon

    def value(self, z, y):
        # log(1 + exp(-yz)) computed without overflow
        return np.logaddexp(0.0, -np.asarray(y) * z) + 0.5 * self.epsilon * np.asarray(z) ** 2

    def derivative(self, z, y):
        y = np.asarray(y)
        return -y * scipy.special.expit(-y * np.asarray(z)) + self.epsilon * np.asarray(z)

    def _second_derivative(self, z, y):
        sig = scipy.special.expit(-np.asarray(y) * np.asarray(z))
        return sig * (1.0 - sig) + self.epsilon

    def _root(self, s, y):
        # Solve phi'(z) = s elementwise: Newton with bisection fallback.
        s = np.asarray(s, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        bound = (np.abs(s) + 1.0) / self.epsilon + 1.0
        lo, hi = -bound, bound.copy()
        z = np.clip(s / (0.25 + self.epsilon), lo, hi)
        tol = 1e-13 * np.maximum(1.0, np.abs(s))
        for _ in range(200):
            r = self.derivative(z, y) - s
            lo = np.where(r <= 0.0, z, lo)
            hi = np.where(r > 0.0, z, hi)
            if np.all(np.abs(r) <= tol):
                break
            z_new = z - r / self._second_derivative(z, y)
            mid = 0.5 * (lo + hi)
            bad = ~np.isfinite(z_new) | (z_new <= lo) | (z_new >= hi)
            z = np.where(bad, mid, z_new)
        return z

    def conjugate(self, s, y):
        z = self._root(s, y)
        return np.asarray(s) * z - self.value(z, y)

    def conjugate_derivative(self, s, y):
        return self._root(s, y)


@dataclass(frozen=True)
class ErmProblem:
    """Dataset and regulariser: feature matrix A (d x n, one column per
    example), targets y (length n), a loss object, and lam_reg > 0."""

    A: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    loss: object = field(default_factory=SquaredLoss)
    lam_reg: float = 1.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if A.ndim != 2:
            raise ValueError(f"A must be d x n, got shape {A.shape}")
        if y.shape != (A.shape[1],):
            raise ValueError(
                f"y must have one entry per column of A ({A.shape[1]}), got {y.shape}"
            )
        if self.lam_reg <= 0.0:
            raise ValueError(f"lam_reg must be positive, got {self.lam_reg}")
        if isinstance(self.loss, LogisticLoss) and not np.all(np.abs(y) == 1.0):
            raise ValueError("logistic loss expects labels in {-1, +1}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def d(self) -> int:
        return self.A.shape[0]

    def smoothness_matrix(self) -> np.ndarray:
        """Dual Hessian bound X = (1/(lam n^2)) A'A + I/(gamma n)."""
        n = self.n
        X = (self.A.T @ self.A) / (self.lam_reg * n * n)
        X = 0.5 * (X + X.T)
        X[np.diag_indices_from(X)] += 1.0 / (self.loss.gamma * n)
        return X

    def curvature(self) -> CurvaturePair:
        """Curvature pair of the (negated) dual objective.

        The quadratic part contributes (1/(lam n^2)) A'A to both bounds;
        the separable part is between I/(L n) and I/(gamma n), where L
        is the loss smoothness.  For the squared loss L == gamma and the
        dual is exactly quadratic.
        """
        n = self.n
        base = (self.A.T @ self.A) / (self.lam_reg * n * n)
        base = 0.5 * (base + base.T)
        M = base.copy()
        M[np.diag_indices_from(M)] += 1.0 / (self.loss.gamma * n)
        if math.isclose(self.loss.gamma, self.loss.smoothness):
            return CurvaturePair.from_hessian(M)
        G = base
        G[np.diag_indices_from(G)] += 1.0 / (self.loss.smoothness * n)
        return CurvaturePair(M, G)

    def average_of(self, alpha: np.ndarray) -> np.ndarray:
        """abar = (1/(lam n)) A alpha."""
        return (self.A @ alpha) / (self.lam_reg * self.n)

    def primal_value(self, w: np.ndarray) -> float:
        z = self.A.T @ w
        return float(
            np.sum(self.loss.value(z, self.y)) / self.n
            + 0.5 * self.lam_reg * (w @ w)
        )

    def dual_value(self, alpha: np.ndarray) -> float:
        abar = self.average_of(alpha)
        conj = np.sum(self.loss.conjugate(-alpha, self.y))
        return float(-conj / self.n - 0.5 * self.lam_reg * (abar @ abar))

    def psi_gradient(self, alpha: np.ndarray, idx: np.ndarray | None = None) -> np.ndarray:
        """Gradient of psi_i(alpha_i) = (1/n) phi_i*(-alpha_i) at the
        given coordinates (all of them by default)."""
        if idx is None:
            return -np.asarray(
                self.loss.conjugate_derivative(-alpha, self.y), dtype=np.float64
            ) / self.n
        return -np.asarray(
            self.loss.conjugate_derivative(-alpha[idx], self.y[idx]), dtype=np.float64
        ) / self.n


@dataclass
class DualState:
    """Dual iterate alpha and its running average abar.

    abar is updated incrementally by the solver and must equal
    (1/(lam n)) A alpha up to round-off at all times.
    """

    alpha: np.ndarray
    alpha_bar: np.ndarray

    @classmethod
    def initial(cls, problem: ErmProblem, alpha0: np.ndarray | None = None) -> "DualState":
        alpha = np.zeros(problem.n) if alpha0 is None else np.asarray(alpha0, dtype=np.float64).copy()
        if alpha.shape != (problem.n,):
            raise ValueError(f"alpha0 must have shape ({problem.n},), got {alpha.shape}")
        return cls(alpha, problem.average_of(alpha))

    def consistency_error(self, problem: ErmProblem) -> float:
        """Max-norm drift between abar and (1/(lam n)) A alpha."""
        return float(
            np.abs(self.alpha_bar - problem.average_of(self.alpha)).max(initial=0.0)
        )


def primal_from_dual(problem: ErmProblem, alpha: np.ndarray) -> np.ndarray:
    """Primal weights w = grad g*(abar); with the quadratic regulariser
    g = ||.||^2/2 this is abar itself."""
    return problem.average_of(alpha)


def block_subproblem(
    problem: ErmProblem,
    state: DualState,
    S,
    X: np.ndarray,
) -> np.ndarray:
    """Newton direction of one dual block: zero outside S, and on S the
    solution of X[S, S] h = -((1/n) A'w + grad psi(alpha))[S], where
    w is the primal point of the current state."""
    idx = check_index_set(S, problem.n)
    w = state.alpha_bar
    u = (problem.A[:, idx].T @ w) / problem.n + problem.psi_gradient(state.alpha, idx)
    try:
        block = scipy.linalg.cho_factor(
            X[np.ix_(idx, idx)], lower=True, check_finite=False
        )
    except scipy.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError(
            f"dual block {idx.tolist()} is not positive definite: {err}"
        ) from err
    h = np.zeros(problem.n)
    h[idx] = -scipy.linalg.cho_solve(block, u, check_finite=False)
    return h


@dataclass(frozen=True)
class ErmRecord:
    iteration: int
    primal: float
    dual: float
    gap: float
    consistency: float
    elapsed: float


@dataclass
class ErmTrace:
    """Duality-gap trace of one dual run."""

    records: list[ErmRecord]
    status: str
    alpha: np.ndarray
    w: np.ndarray
    b: float
    theta_used: float | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration

    def write_csv(self, path_or_file, include_elapsed: bool = True) -> None:
        import csv

        close = False
        if hasattr(path_or_file, "write"):
            fh = path_or_file
        else:
            fh = open(path_or_file, "w", newline="")
            close = True
        try:
            writer = csv.writer(fh, lineterminator="\n")
            header = ["iteration", "primal", "dual", "gap"]
            if include_elapsed:
                header.append("elapsed_seconds")
            writer.writerow(header)
            for rec in self.records:
                row = [rec.iteration, repr(rec.primal), repr(rec.dual), repr(rec.gap)]
                if include_elapsed:
                    row.append(repr(rec.elapsed))
                writer.writerow(row)
        finally:
            if close:
                fh.close()


def _resolve_erm_damping(
    problem: ErmProblem, X: np.ndarray, config: SolverConfig
) -> tuple[float, float | None]:
    if config.b != "auto":
        b = float(config.b)
        if b < 1.0:
            raise ValueError(f"explicit damping b must be at least 1, got {b}")
        return b, None
    spec = config.theta
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        th = float(spec)
        if th <= 0.0:
            raise ValueError(f"theta must be positive, got {th}")
    elif spec == "exact":
        pair = problem.curvature()
        th = theta(pair, expected_lifted_inverse(X, config.scheme).matrix)
    elif spec == "bound":
        if config.scheme.serial_kind != "list":
            raise ValueError(
                "theta='bound' uses (tau/n) cond(X), which covers list samplings only"
            )
        if not math.isclose(problem.loss.gamma, problem.loss.smoothness):
            raise ValueError(
                "theta='bound' requires a quadratic dual (squared loss)"
            )
        th = theta_cond_bound(config.scheme.tau, X)
    else:
        raise ValueError(
            "b='auto' needs an explicit theta source: a number, 'exact', or 'bound'"
        )
    if math.isclose(problem.loss.gamma, problem.loss.smoothness):
        lam = 1.0
    else:
        lam = lambda_ratio(problem.curvature())
    return b_threshold(config.scheme.c, lam, th), th


def run_erm(
    problem: ErmProblem,
    config: SolverConfig,
    alpha0: np.ndarray | None = None,
) -> ErmTrace:
    """Run the dual block-Newton iteration until the duality gap
    P(w) - D(alpha) falls to config.tol.

    config.scheme samples over the n dual coordinates.  Every record
    carries primal, dual, gap and the abar consistency drift; the
    returned weights are the primal point of the final state.
    """
    if config.scheme.n != problem.n:
        raise ValueError(
            f"scheme dimension {config.scheme.n} does not match n={problem.n} examples"
        )
    if config.tol < 0.0:
        raise ValueError(f"tolerance must be non-negative, got {config.tol}")
    X = problem.smoothness_matrix()
    b, theta_used = _resolve_erm_damping(problem, X, config)
    rng = np.random.default_rng(config.seed)
    state = DualState.initial(problem, alpha0)
    scale = 1.0 / (problem.lam_reg * problem.n * b)

    records: list[ErmRecord] = []
    status = "max-iterations"
    t0 = time.perf_counter()
    for k in range(config.max_iter + 1):
        w = state.alpha_bar
        primal = problem.primal_value(w)
        dual = problem.dual_value(state.alpha)
        gap = primal - dual
        records.append(
            ErmRecord(
                k, primal, dual, gap,
                state.consistency_error(problem),
                time.perf_counter() - t0,
            )
        )
        if gap <= config.tol:
            status = "converged"
            break
        if k == config.max_iter:
            break
        sets = draw(config.scheme, rng)
        total = block_subproblem(problem, state, sets[0], X)
        for S in sets[1:]:
            total += block_subproblem(problem, state, S, X)
        state.alpha = state.alpha + total / b
        state.alpha_bar = state.alpha_bar + (problem.A @ total) * scale
    return ErmTrace(records, status, state.alpha, state.alpha_bar, b, theta_used)


def load_libsvm(path, n_features: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Read a LIBSVM sparse text file.

    Each line is ``label index:value ...`` with 1-based feature indices.
    Returns (A, y) where A is d x n with one column per example.  The
    feature count is inferred from the largest index unless n_features
    is given.  Malformed lines raise ValueError naming the line number.
    """
    labels: list[float] = []
    rows: list[list[tuple[int, float]]] = []
    max_index = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            parts = text.split()
            try:
                label = float(parts[0])
            except ValueError:
                raise ValueError(
                    f"{path}:{lineno}: bad label {parts[0]!r}"
                ) from None
            entries: list[tuple[int, float]] = []
            for token in parts[1:]:
                idx_text, colon, val_text = token.partition(":")
                if not colon:
                    raise ValueError(
                        f"{path}:{lineno}: expected index:value, got {token!r}"
                    )
                try:
                    idx = int(idx_text)
                    val = float(val_text)
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: bad feature token {token!r}"
                    ) from None
                if idx < 1:
                    raise ValueError(
                        f"{path}:{lineno}: feature indices are 1-based, got {idx}"
                    )
                entries.append((idx - 1, val))
                max_index = max(max_index, idx)
            labels.append(label)
            rows.append(entries)
    if not labels:
        raise ValueError(f"{path}: no data lines")
    d = n_features if n_features is not None else max_index
    if max_index > d:
        raise ValueError(
            f"{path}: feature index {max_index} exceeds n_features={d}"
        )
    A = np.zeros((d, len(labels)))
    for col, entries in enumerate(rows):
        for idx, val in entries:
            A[idx, col] = val
    return A, np.asarray(labels)
