"""Convergence-rate constants for stochastic Newton-type block methods.

For a curvature pair (M, G) -- f has Hessians bounded above by M and
below by G in the semidefinite order -- and a sampling scheme with
expected lifted inverse E = E[(M_S)^{-1}], the relevant constants are

    sigma_1 = lambda_min(G^{1/2} E G^{1/2})     serial rate,
    theta   = lambda_max(G^{1/2} E G^{1/2})     step-overshoot measure,
    lambda  = lambda_max(G^{-1/2} M G^{-1/2})   curvature mismatch,

with 0 < sigma_1 <= theta <= 1 whenever G <= M are positive definite.
Running c workers with step damping b >= b_min(c) = (c-1)*lambda*theta + 1
contracts the expected objective gap by 1 - sigma_p per iteration, where
sigma_p = c*sigma_1/b.  The PCDM constants sigma_3 and sigma_b serve as
comparison baselines for the same block sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    check_symmetric,
    condition_number,
    eigen_extremes,
    invsqrt_pd,
    psd_order_holds,
    sqrt_pd,
)
from .sampling import SamplingScheme, expected_lifted_inverse

__all__ = [
    "CurvaturePair",
    "sigma1",
    "theta",
    "lambda_ratio",
    "b_threshold",
    "sigma_p",
    "theta_cond_bound",
    "tridiag_theta_bound",
    "RhoAnalysis",
    "rho_closed_forms",
    "PcdmConstants",
    "pcdm_constants",
    "RateReport",
    "rate_report",
]


@dataclass(frozen=True)
class CurvaturePair:
    """Upper/lower curvature matrices (M, G), validated so that both are
    positive definite and G <= M in the semidefinite order."""

    M: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)

    def __post_init__(self):
        M = check_symmetric(self.M)
        G = check_symmetric(self.G)
        if M.shape != G.shape:
            raise ValueError(f"shape mismatch: M {M.shape} vs G {G.shape}")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "G", G)
        if self.quadratic:
            if eigen_extremes(M)[0] <= 0.0:
                raise ValueError("M must be positive definite")
            return
        if eigen_extremes(G)[0] <= 0.0:
            raise ValueError("G must be positive definite")
        scale = float(np.abs(M).max(initial=1.0))
        if not psd_order_holds(G, M, tol=1e-9 * max(1.0, scale)):
            raise ValueError("G <= M fails in the semidefinite order")

    @classmethod
    def from_hessian(cls, M: np.ndarray) -> "CurvaturePair":
        """Pair for a quadratic objective, where M and G coincide."""
        M = check_symmetric(M)
        return cls(M, M)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def quadratic(self) -> bool:
        return self.M is self.G or np.array_equal(self.M, self.G)


def _weighted_extremes(pair: CurvaturePair, E: np.ndarray) -> tuple[float, float]:
    W = sqrt_pd(pair.G)
    S = W @ np.asarray(E, dtype=np.float64) @ W
    return eigen_extremes(0.5 * (S + S.T))


def sigma1(pair: CurvaturePair, expected_inverse: np.ndarray) -> float:
    """Serial rate constant lambda_min(G^{1/2} E G^{1/2})."""
    return _weighted_extremes(pair, expected_inverse)[0]


def theta(pair: CurvaturePair, expected_inverse: np.ndarray) -> float:
    """Overshoot constant lambda_max(G^{1/2} E G^{1/2})."""
    return _weighted_extremes(pair, expected_inverse)[1]


def lambda_ratio(pair: CurvaturePair) -> float:
    """Curvature mismatch lambda_max(G^{-1/2} M G^{-1/2}), exactly 1 for
    quadratic pairs (M == G)."""
    if pair.quadratic:
        return 1.0
    Wi = invsqrt_pd(pair.G)
    S = Wi @ pair.M @ Wi
    return eigen_extremes(0.5 * (S + S.T))[1]


def b_threshold(c: int, lam: float, theta_value: float) -> float:
    """Smallest admissible damping b_min = (c-1)*lambda*theta + 1."""
    if c < 1:
        raise ValueError(f"c must be positive, got {c}")
    if lam <= 0.0 or theta_value <= 0.0:
        raise ValueError("lambda and theta must be positive")
    return (c - 1) * lam * theta_value + 1.0


def sigma_p(c: int, b: float, sigma1_value: float, b_min: float = 1.0) -> float:
    """Parallel rate constant c*sigma_1/b for damping b >= b_min.

    b == b_min is accepted (the contraction guarantee is tight there);
    anything below raises ValueError because the underlying one-step
    bound no longer applies.
    """
    if c < 1:
        raise ValueError(f"c must be positive, got {c}")
    if b < b_min - 1e-12:
        raise ValueError(
            f"damping b={b} is below the admissible threshold b_min={b_min}"
        )
    if not 0.0 <= sigma1_value <= 1.0 + 1e-9:
        raise ValueError(f"sigma1 must lie in [0, 1], got {sigma1_value}")
    return c * sigma1_value / b


def theta_cond_bound(tau: int, M: np.ndarray) -> float:
    """Upper bound (tau/n) * cond(M) on theta for list-type samplings
    when the curvature pair is (M, M)."""
    M = check_symmetric(M)
    n = M.shape[0]
    if not 1 <= tau <= n:
        raise ValueError(f"tau must lie in [1, n={n}], got {tau}")
    return (tau / n) * condition_number(M)


def tridiag_theta_bound(alpha: float, n: int) -> float:
    """Upper bound 2 / ((1 - alpha) n) on theta for 2-list sampling of
    the unit-diagonal tridiagonal matrix with off-diagonal alpha.

    Valid for 0 <= alpha <= 0.5 and n >= 3; tight at alpha = 0.
    """
    if not 0.0 <= alpha <= 0.5:
        raise ValueError(f"alpha must lie in [0, 0.5], got {alpha}")
    if n < 3:
        raise ValueError(f"n must be at least 3, got {n}")
    return 2.0 / ((1.0 - alpha) * n)


@dataclass(frozen=True)
class RhoAnalysis:
    """Closed-form rate constants for the unit-diagonal matrix with
    constant off-diagonal rho under tau-nice sampling.

    Every tau x tau principal submatrix is the same rho-matrix, whose
    inverse has diagonal a_coef and off-diagonal b_coef:

        a_coef = ((tau-2) rho + 1) / ((1-rho)((tau-1) rho + 1))
        b_coef = -rho / ((1-rho)((tau-1) rho + 1))

    The expected lifted inverse is then itself of rho-matrix shape with
    effective correlation rho_nested = (tau-1) b_coef / ((n-1) a_coef),
    which gives sigma1 and theta by multiplying the extreme eigenvalues
    of the two rho-shaped factors.
    """

    n: int
    tau: int
    rho: float
    a_coef: float
    b_coef: float
    rho_nested: float
    sigma1: float
    theta: float

    def expected_inverse(self) -> np.ndarray:
        """Closed-form E[(M_S)^{-1}]: diagonal tau*a_coef/n, off-diagonal
        tau*(tau-1)*b_coef/(n*(n-1))."""
        off = self.tau * (self.tau - 1) / (self.n * (self.n - 1)) * self.b_coef
        E = np.full((self.n, self.n), off)
        np.fill_diagonal(E, self.tau * self.a_coef / self.n)
        return E

    @property
    def condition_number(self) -> float:
        """cond(M) = (n rho - rho + 1) / (1 - rho), from the spectrum
        {1 - rho with multiplicity n-1, n rho - rho + 1}.  A sometimes
        quoted variant with -1 in the numerator is inconsistent with
        that spectrum and is not used here."""
        return (self.n * self.rho - self.rho + 1.0) / (1.0 - self.rho)


def rho_closed_forms(n: int, tau: int, rho: float) -> RhoAnalysis:
    """Closed-form sigma1/theta for tau-nice sampling of the rho-matrix."""
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if not 2 <= tau <= n:
        raise ValueError(f"tau must lie in [2, n={n}], got {tau}")
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie strictly in (0, 1), got {rho}")
    denom = (1.0 - rho) * ((tau - 1) * rho + 1.0)
    a_coef = ((tau - 2) * rho + 1.0) / denom
    b_coef = -rho / denom
    rho_nested = (tau - 1) * b_coef / ((n - 1) * a_coef)
    scale = tau * a_coef / n
    sig = (1.0 - rho) * (1.0 - rho_nested) * scale
    th = (n * rho - rho + 1.0) * (n * rho_nested - rho_nested + 1.0) * scale
    return RhoAnalysis(n, tau, rho, a_coef, b_coef, rho_nested, sig, th)


@dataclass(frozen=True)
class PcdmConstants:
    """Comparison constants for parallel coordinate descent with tau*c
    coordinates updated per iteration.

    v holds the per-coordinate curvature weights; sigma3 is the rate
    constant lambda_min(G^{1/2} D(1/v) D(p) G^{1/2}) with uniform
    inclusion probabilities p_i = tau*c/n, and sigma_b is the cruder
    variant obtained by replacing every v_i with lambda_max(A^T A).
    support_sets lists the nonzero coordinates of each row of A (None
    when the dense worst case was assumed).
    """

    tau_c: int
    v: np.ndarray = field(repr=False)
    sigma3: float
    sigma_b: float
    support_sets: list[np.ndarray] | None = field(default=None, repr=False)


def pcdm_constants(
    pair: CurvaturePair,
    tau_c: int,
    A: np.ndarray | None = None,
    assume_dense: bool = False,
) -> PcdmConstants:
    """PCDM rate constants for M = A^T A with tau*c updates per iteration.

    With the decomposition A (m x n) available, the weights are

        v_i = sum_j (1 + (|J_j| - 1)(tau_c - 1)/max(n-1, 1)) * A_ji^2,

    where J_j is the support of row j.  When every row is fully dense
    this collapses to v_i = tau_c * M_ii, which is what assume_dense
    uses directly when no decomposition is supplied.
    """
    n = pair.n
    if not 1 <= tau_c <= n:
        raise ValueError(f"tau_c must lie in [1, n={n}], got {tau_c}")
    support: list[np.ndarray] | None = None
    if A is not None:
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[1] != n:
            raise ValueError(f"decomposition must have {n} columns, got {A.shape}")
        scale = max(1.0, float(np.abs(pair.M).max(initial=0.0)))
        if np.abs(A.T @ A - pair.M).max(initial=0.0) > 1e-8 * scale:
            raise ValueError("decomposition does not satisfy A^T A = M")
        support = [np.flatnonzero(row) for row in A]
        omega = np.array([s.size for s in support], dtype=np.float64)
        weights = 1.0 + (omega - 1.0) * (tau_c - 1) / max(n - 1, 1)
        v = weights @ (A * A)
    elif assume_dense:
        v = tau_c * np.diag(pair.M).copy()
    else:
        raise ValueError(
            "need the decomposition A with M = A^T A, or assume_dense=True "
            "for the fully dense worst case"
        )
    if np.any(v <= 0.0):
        bad = int(np.flatnonzero(v <= 0.0)[0])
        raise ValueError(f"curvature weight v[{bad}] is not positive")
    p = tau_c / n
    W = sqrt_pd(pair.G)
    S = (W * (p / v)) @ W
    sig3 = eigen_extremes(0.5 * (S + S.T))[0]
    g_min = eigen_extremes(pair.G)[0]
    m_max = eigen_extremes(pair.M)[1]
    sig_b = p * g_min / m_max
    return PcdmConstants(tau_c, np.asarray(v), sig3, sig_b, support)


@dataclass(frozen=True)
class RateReport:
    """All rate constants of one (pair, scheme) combination, with the
    parallel constant evaluated at the smallest admissible damping."""

    scheme: SamplingScheme
    sigma1: float
    theta: float
    lam: float
    b_min: float
    sigma_p: float
    speedup: float
    hypotheses_hold: bool

    def sigma_p_at(self, b: float) -> float:
        return sigma_p(self.scheme.c, b, self.sigma1, self.b_min)


def rate_report(
    pair: CurvaturePair,
    scheme: SamplingScheme,
    expected_inverse: np.ndarray | None = None,
    mode: str = "enumerate",
    mc_samples: int = 100_000,
    mc_seed: int = 0,
) -> RateReport:
    """Assemble sigma1, theta, lambda, b_min, sigma_p and the speedup
    sigma_p/sigma1 for one scheme.

    For non-overlapping samplings the constituent sets are not
    independent, so the parallel contraction guarantee is not
    established; the report still evaluates the constants from one
    constituent set but clears ``hypotheses_hold``.
    """
    if expected_inverse is None:
        expected_inverse = expected_lifted_inverse(
            pair.M, scheme, mode=mode, samples=mc_samples, seed=mc_seed
        ).matrix
    lo, hi = _weighted_extremes(pair, expected_inverse)
    lam = lambda_ratio(pair)
    b_min = b_threshold(scheme.c, lam, hi)
    sp = sigma_p(scheme.c, b_min, lo, b_min)
    return RateReport(
        scheme=scheme,
        sigma1=lo,
        theta=hi,
        lam=lam,
        b_min=b_min,
        sigma_p=sp,
        speedup=sp / lo if lo > 0.0 else float("nan"),
        hypotheses_hold=scheme.kind != "non-overlapping",
    )
