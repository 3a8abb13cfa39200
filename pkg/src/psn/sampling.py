"""Random index-set samplings and their first-moment statistics.

A sampling scheme describes how blocks of coordinates are picked each
iteration:

* ``nice``        -- one subset of size tau, uniform over all subsets.
* ``list``        -- one of the n contiguous windows of length tau,
                     taken cyclically modulo n, uniform over windows.
* ``parallel-nice`` / ``parallel-list``
                  -- c independent copies of the serial scheme, one per
                     worker, drawn from sub-streams spawned off a single
                     seed so results do not depend on worker scheduling.
* ``non-overlapping``
                  -- one uniform subset of size c*tau, shuffled and cut
                     into c pairwise disjoint sets of size tau.

Probability matrices and expected lifted inverses refer to one
constituent set: for the parallel schemes each worker's set has the
distribution of the serial counterpart, and for ``non-overlapping``
each chunk of a uniform (c*tau)-subset is itself a uniform tau-subset.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import lifted_inverse

__all__ = [
    "SERIAL_KINDS",
    "PARALLEL_KINDS",
    "SamplingScheme",
    "parse_scheme",
    "draw",
    "probability_matrix",
    "ExpectedInverse",
    "expected_lifted_inverse",
]

SERIAL_KINDS = ("nice", "list")
PARALLEL_KINDS = ("parallel-nice", "parallel-list", "non-overlapping")

# Refuse exact enumeration beyond this many subsets.
ENUMERATION_LIMIT = 10**6


@dataclass(frozen=True)
class SamplingScheme:
    """Immutable description of a sampling: kind, dimension n, block size
    tau, and worker count c (1 for the serial kinds)."""

    kind: str
    n: int
    tau: int
    c: int = 1

    def __post_init__(self):
        if self.kind not in SERIAL_KINDS + PARALLEL_KINDS:
            raise ValueError(
                f"unknown sampling kind {self.kind!r}; expected one of "
                f"{SERIAL_KINDS + PARALLEL_KINDS}"
            )
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not 1 <= self.tau <= self.n:
            raise ValueError(f"tau must lie in [1, n={self.n}], got {self.tau}")
        if self.c < 1:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.kind in SERIAL_KINDS and self.c != 1:
            raise ValueError(f"serial sampling {self.kind!r} requires c=1, got c={self.c}")
        if self.kind == "non-overlapping" and self.c * self.tau > self.n:
            raise ValueError(
                f"non-overlapping sampling needs c*tau <= n, got "
                f"{self.c}*{self.tau} > {self.n}"
            )

    @property
    def serial_kind(self) -> str:
        """Kind of one constituent set ('nice' or 'list')."""
        if self.kind in ("nice", "parallel-nice", "non-overlapping"):
            return "nice"
        return "list"

    def constituent(self) -> "SamplingScheme":
        """Serial scheme with the distribution of one constituent set."""
        return SamplingScheme(self.serial_kind, self.n, self.tau, 1)

    def with_workers(self, c: int) -> "SamplingScheme":
        """Same sampling family at a different worker count.

        c == 1 drops to the serial kind; c > 1 lifts 'nice'/'list' to
        their parallel variants.  Non-overlapping stays non-overlapping.
        """
        if self.kind == "non-overlapping":
            return replace(self, c=c)
        if c == 1:
            return SamplingScheme(self.serial_kind, self.n, self.tau, 1)
        return SamplingScheme("parallel-" + self.serial_kind, self.n, self.tau, c)


def parse_scheme(text: str, n: int) -> SamplingScheme:
    """Parse a scheme string such as 'nice:tau=2' or
    'parallel-list:tau=5,c=4' against dimension n."""
    kind, _, params = text.strip().partition(":")
    kind = kind.strip()
    opts: dict[str, int] = {}
    if params:
        for item in params.split(","):
            key, eq, value = item.partition("=")
            key = key.strip()
            if not eq or key not in ("tau", "c"):
                raise ValueError(
                    f"bad scheme parameter {item!r}; expected tau=INT or c=INT"
                )
            try:
                opts[key] = int(value)
            except ValueError:
                raise ValueError(f"bad integer in scheme parameter {item!r}") from None
    if "tau" not in opts:
        raise ValueError(f"scheme {text!r} does not specify tau")
    return SamplingScheme(kind, n, opts["tau"], opts.get("c", 1))


def _draw_one(kind: str, n: int, tau: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "nice":
        return np.sort(rng.choice(n, size=tau, replace=False))
    start = int(rng.integers(n))
    return np.sort((start + np.arange(tau)) % n)


def draw(scheme: SamplingScheme, rng: np.random.Generator) -> list[np.ndarray]:
    """Draw one realisation: a list of c sorted index arrays.

    Serial kinds consume the generator directly.  Parallel kinds spawn c
    child streams (one per worker) off the generator, so the sets are
    independent and the result is reproducible regardless of how workers
    are scheduled.  Non-overlapping draws the master (c*tau)-subset and
    the partition from the generator itself.
    """
    if scheme.kind in SERIAL_KINDS:
        return [_draw_one(scheme.kind, scheme.n, scheme.tau, rng)]
    if scheme.kind == "non-overlapping":
        master = rng.choice(scheme.n, size=scheme.c * scheme.tau, replace=False)
        shuffled = rng.permutation(master)
        return [
            np.sort(shuffled[i * scheme.tau : (i + 1) * scheme.tau])
            for i in range(scheme.c)
        ]
    base = scheme.serial_kind
    return [
        _draw_one(base, scheme.n, scheme.tau, child)
        for child in rng.spawn(scheme.c)
    ]


def probability_matrix(scheme: SamplingScheme) -> np.ndarray:
    """Pairwise inclusion probabilities of one constituent set.

    Entry (i, j) is P(i and j both sampled); the diagonal holds the
    single-coordinate probabilities P(i sampled) = tau / n.  Parallel
    kinds report the matrix of one constituent set.
    """
    n, tau = scheme.n, scheme.tau
    if scheme.serial_kind == "nice":
        off = tau * (tau - 1) / (n * (n - 1)) if n > 1 else 1.0
        P = np.full((n, n), off)
    else:
        P = np.zeros((n, n))
        for start in range(n):
            window = (start + np.arange(tau)) % n
            P[np.ix_(window, window)] += 1.0 / n
    np.fill_diagonal(P, tau / n)
    return P


@dataclass(frozen=True)
class ExpectedInverse:
    """E[(M_S)^{-1}] over one constituent set, with provenance.

    ``standard_error`` is the Frobenius-norm standard error of the
    Monte Carlo mean and None for exact enumeration.
    """

    matrix: np.ndarray = field(repr=False)
    mode: str
    samples: int | None = None
    standard_error: float | None = None


def _enumerate_sets(scheme: SamplingScheme):
    n, tau = scheme.n, scheme.tau
    if scheme.serial_kind == "list":
        for start in range(n):
            yield np.sort((start + np.arange(tau)) % n)
    else:
        for combo in itertools.combinations(range(n), tau):
            yield np.asarray(combo, dtype=np.int64)


def expected_lifted_inverse(
    M: np.ndarray,
    scheme: SamplingScheme,
    mode: str = "enumerate",
    samples: int = 100_000,
    seed: int = 0,
) -> ExpectedInverse:
    """Expected lifted inverse E[(M_S)^{-1}] of one constituent set.

    mode='enumerate' averages over the whole support: all C(n, tau)
    subsets for nice-type schemes (refused above 10^6 subsets) or the n
    windows for list-type schemes.  mode='monte-carlo' averages over
    ``samples`` independent draws seeded by ``seed`` and reports the
    Frobenius standard error of the mean.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if n != scheme.n:
        raise ValueError(f"matrix dimension {n} does not match scheme n={scheme.n}")
    serial = scheme.constituent()

    if mode == "enumerate":
        if serial.kind == "nice":
            count = math.comb(n, scheme.tau)
            if count > ENUMERATION_LIMIT:
                raise ValueError(
                    f"enumeration over C({n}, {scheme.tau}) = {count} subsets "
                    f"exceeds the limit {ENUMERATION_LIMIT}; use mode='monte-carlo'"
                )
        else:
            count = n
        acc = np.zeros_like(M)
        for S in _enumerate_sets(serial):
            acc += lifted_inverse(M, S)
        return ExpectedInverse(acc / count, "enumerate")

    if mode == "monte-carlo":
        if samples < 2:
            raise ValueError(f"need at least 2 samples, got {samples}")
        rng = np.random.default_rng(seed)
        acc = np.zeros_like(M)
        acc_sq = np.zeros_like(M)
        for _ in range(samples):
            Z = lifted_inverse(M, _draw_one(serial.kind, n, scheme.tau, rng))
            acc += Z
            acc_sq += Z * Z
        mean = acc / samples
        var = (acc_sq - samples * mean * mean) / (samples - 1)
        se = math.sqrt(float(np.clip(var, 0.0, None).sum()) / samples)
        return ExpectedInverse(mean, "monte-carlo", samples, se)

    raise ValueError(f"unknown mode {mode!r}; expected 'enumerate' or 'monte-carlo'")
