"""Sampling distribution and first-moment tests.

Probability matrices are cross-checked three ways: combinatorial
counting, the cyclic-gap formula for windows, and empirical draw
frequencies.  Expected lifted inverses are checked against hand-built
matrices and Monte Carlo agreement.
"""

import itertools

import numpy as np
import pytest

from psn.linalg import lifted_submatrix, make_rho_matrix, make_tridiagonal
from psn.rates import rho_closed_forms
from psn.sampling import (
    SamplingScheme,
    draw,
    expected_lifted_inverse,
    parse_scheme,
    probability_matrix,
)


class TestSchemeValidation:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            SamplingScheme("fancy", 5, 2)

    def test_tau_range(self):
        with pytest.raises(ValueError):
            SamplingScheme("nice", 5, 0)
        with pytest.raises(ValueError):
            SamplingScheme("nice", 5, 6)

    def test_serial_kinds_require_c_one(self):
        with pytest.raises(ValueError):
            SamplingScheme("nice", 5, 2, c=2)

    def test_non_overlapping_capacity(self):
        SamplingScheme("non-overlapping", 6, 2, c=3)
        with pytest.raises(ValueError):
            SamplingScheme("non-overlapping", 6, 2, c=4)

    def test_parse_round_trip(self):
        s = parse_scheme("parallel-list:tau=5,c=4", 20)
        assert (s.kind, s.n, s.tau, s.c) == ("parallel-list", 20, 5, 4)
        s = parse_scheme("nice:tau=2", 7)
        assert (s.kind, s.tau, s.c) == ("nice", 2, 1)

    def test_parse_errors(self):
        with pytest.raises(ValueError):
            parse_scheme("nice", 7)  # tau missing
        with pytest.raises(ValueError):
            parse_scheme("nice:tau=x", 7)
        with pytest.raises(ValueError):
            parse_scheme("nice:frobs=2", 7)

    def test_with_workers_lifts_and_drops(self):
        s = parse_scheme("nice:tau=2", 8)
        assert s.with_workers(4).kind == "parallel-nice"
        assert s.with_workers(4).c == 4
        assert s.with_workers(1).kind == "nice"
        p = parse_scheme("parallel-list:tau=2,c=3", 8)
        assert p.with_workers(1).kind == "list"
        no = SamplingScheme("non-overlapping", 8, 2, c=2)
        assert no.with_workers(4).kind == "non-overlapping"


class TestDraws:
    def test_nice_full_tau_is_whole_set(self):
        scheme = SamplingScheme("nice", 6, 6)
        rng = np.random.default_rng(0)
        for _ in range(5):
            (S,) = draw(scheme, rng)
            assert S.tolist() == list(range(6))

    def test_nice_shape_and_range(self):
        scheme = SamplingScheme("nice", 9, 3)
        rng = np.random.default_rng(1)
        for _ in range(50):
            (S,) = draw(scheme, rng)
            assert len(S) == 3
            assert len(set(S.tolist())) == 3
            assert np.all((0 <= S) & (S < 9))
            assert np.all(np.diff(S) > 0)

    def test_list_windows_are_cyclically_contiguous(self):
        n, tau = 7, 3
        windows = {
            tuple(sorted((s + k) % n for k in range(tau))) for s in range(n)
        }
        scheme = SamplingScheme("list", n, tau)
        rng = np.random.default_rng(2)
        seen = set()
        for _ in range(300):
            (S,) = draw(scheme, rng)
            key = tuple(S.tolist())
            assert key in windows
            seen.add(key)
        assert seen == windows  # all n windows occur

    def test_parallel_draw_structure(self):
        scheme = SamplingScheme("parallel-nice", 5, 2, c=2)
        rng = np.random.default_rng(3)
        sets = draw(scheme, rng)
        assert len(sets) == 2
        for S in sets:
            assert len(S) == 2 and np.all((0 <= S) & (S < 5))

    def test_parallel_draw_reproducible(self):
        scheme = SamplingScheme("parallel-list", 10, 3, c=4)
        a = draw(scheme, np.random.default_rng(42))
        b = draw(scheme, np.random.default_rng(42))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_non_overlapping_disjoint(self):
        scheme = SamplingScheme("non-overlapping", 10, 2, c=4)
        rng = np.random.default_rng(4)
        for _ in range(100):
            sets = draw(scheme, rng)
            assert len(sets) == 4
            union = np.concatenate(sets)
            assert len(np.unique(union)) == 8  # pairwise disjoint

    def test_non_overlapping_marginal_inclusion(self):
        # each chunk of the shuffled master set is a uniform tau-subset
        scheme = SamplingScheme("non-overlapping", 6, 2, c=2)
        rng = np.random.default_rng(5)
        trials = 20_000
        counts = np.zeros(6)
        for _ in range(trials):
            counts[draw(scheme, rng)[0]] += 1
        p = counts / trials
        se = np.sqrt((2 / 6) * (1 - 2 / 6) / trials)
        assert np.abs(p - 2 / 6).max() < 4 * se


class TestProbabilityMatrix:
    def test_nice_against_subset_counting(self):
        n, tau = 5, 2
        P = probability_matrix(SamplingScheme("nice", n, tau))
        subsets = list(itertools.combinations(range(n), tau))
        for i in range(n):
            for j in range(n):
                hits = sum(1 for S in subsets if i in S and j in S)
                assert P[i, j] == pytest.approx(hits / len(subsets), abs=1e-15)

    def test_list_against_cyclic_gap_formula(self):
        for n, tau in [(6, 2), (7, 3), (5, 5)]:
            P = probability_matrix(SamplingScheme("list", n, tau))
            for i in range(n):
                for j in range(n):
                    if i == j:
                        assert P[i, j] == pytest.approx(tau / n, abs=1e-15)
                        continue
                    d = (j - i) % n
                    hits = max(0, tau - d) + max(0, tau - (n - d))
                    assert P[i, j] == pytest.approx(hits / n, abs=1e-15)

    def test_invariants_bounds_and_symmetry(self):
        for scheme in (
            SamplingScheme("nice", 8, 3),
            SamplingScheme("list", 8, 3),
            SamplingScheme("parallel-nice", 8, 3, c=2),
            SamplingScheme("non-overlapping", 8, 2, c=3),
        ):
            P = probability_matrix(scheme)
            p = np.diag(P)
            assert np.all(p > 0)
            assert np.abs(P - P.T).max() == 0.0
            cap = np.minimum.outer(p, p)
            assert np.all(P <= cap + 1e-15)
            assert np.all(P >= 0)

    @pytest.mark.parametrize("kind", ["nice", "list"])
    def test_matches_empirical_frequencies(self, kind):
        n, tau, trials = 5, 2, 100_000
        scheme = SamplingScheme(kind, n, tau)
        P = probability_matrix(scheme)
        rng = np.random.default_rng(6)
        counts = np.zeros((n, n))
        for _ in range(trials):
            (S,) = draw(scheme, rng)
            counts[np.ix_(S, S)] += 1
        emp = counts / trials
        se = np.sqrt(P * (1 - P) / trials)
        # entries with zero probability must never occur
        assert np.all(emp[P == 0] == 0)
        live = P > 0
        assert np.all(np.abs(emp - P)[live] <= 3 * se[live])


class TestExpectedInverse:
    def test_identity_nice(self):
        for n, tau in [(5, 2), (6, 4)]:
            E = expected_lifted_inverse(np.eye(n), SamplingScheme("nice", n, tau))
            assert E.mode == "enumerate"
            assert np.abs(E.matrix - (tau / n) * np.eye(n)).max() < 1e-15

    def test_identity_list(self):
        E = expected_lifted_inverse(np.eye(6), SamplingScheme("list", 6, 2))
        assert np.abs(E.matrix - (2 / 6) * np.eye(6)).max() < 1e-15

    def test_rho_matrix_closed_form(self):
        M = make_rho_matrix(6, 0.4)
        E = expected_lifted_inverse(M, SamplingScheme("nice", 6, 3)).matrix
        assert np.abs(E - rho_closed_forms(6, 3, 0.4).expected_inverse()).max() < 1e-13

    def test_tridiagonal_two_list_hand_built(self):
        # n=4, alpha=0.3: windows {0,1},{1,2},{2,3} share the same 2x2
        # inverse with determinant 0.91; the wrap window {0,3} hits a
        # zero off-diagonal, so its block inverse is the identity.
        alpha, det = 0.3, 1 - 0.3**2
        T = make_tridiagonal(4, alpha)
        E = expected_lifted_inverse(T, SamplingScheme("list", 4, 2)).matrix
        d_in, off = 1 / det, -alpha / det
        expect = (
            np.array(
                [
                    [d_in + 1, off, 0, 0],
                    [off, 2 * d_in, off, 0],
                    [0, off, 2 * d_in, off],
                    [0, 0, off, d_in + 1],
                ]
            )
            / 4.0
        )
        assert np.abs(E - expect).max() < 1e-15

    def test_symmetric_positive_definite(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((6, 6))
        M = A @ A.T + 0.5 * np.eye(6)
        for scheme in (SamplingScheme("nice", 6, 3), SamplingScheme("list", 6, 3)):
            E = expected_lifted_inverse(M, scheme).matrix
            assert np.abs(E - E.T).max() < 1e-14
            assert np.linalg.eigvalsh(E)[0] > 0

    def test_parallel_reduces_to_constituent(self):
        M = make_rho_matrix(5, 0.5)
        serial = expected_lifted_inverse(M, SamplingScheme("nice", 5, 2)).matrix
        par = expected_lifted_inverse(
            M, SamplingScheme("parallel-nice", 5, 2, c=3)
        ).matrix
        non = expected_lifted_inverse(
            M, SamplingScheme("non-overlapping", 5, 2, c=2)
        ).matrix
        assert np.array_equal(serial, par)
        assert np.array_equal(serial, non)

    def test_monte_carlo_agrees_with_enumeration(self):
        M = make_rho_matrix(5, 0.5)
        scheme = SamplingScheme("nice", 5, 2)
        exact = expected_lifted_inverse(M, scheme).matrix
        mc = expected_lifted_inverse(
            M, scheme, mode="monte-carlo", samples=100_000, seed=11
        )
        assert mc.samples == 100_000
        assert mc.standard_error is not None and mc.standard_error > 0
        err = np.linalg.norm(mc.matrix - exact)
        assert err <= 5 * mc.standard_error

    def test_enumeration_refused_beyond_limit(self):
        M = np.eye(30)
        with pytest.raises(ValueError, match="monte-carlo"):
            expected_lifted_inverse(M, SamplingScheme("nice", 30, 10))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            expected_lifted_inverse(np.eye(4), SamplingScheme("nice", 5, 2))


class TestTowerProperty:
    def test_independent_pairs_factorize(self):
        # E[<A A_{S1} x, A_{S2} x>] == <A E[A_S] x, E[A_S] x> for i.i.d.
        # S1, S2; E[A_S] is the elementwise product of P and A.
        n, tau = 5, 2
        scheme = SamplingScheme("nice", n, tau)
        P = probability_matrix(scheme)
        subsets = list(itertools.combinations(range(n), tau))
        rng = np.random.default_rng(8)
        for _ in range(3):
            A = rng.standard_normal((n, n))
            A = 0.5 * (A + A.T)
            x = rng.standard_normal(n)
            lifted = [lifted_submatrix(A, np.array(S)) for S in subsets]
            lhs = np.mean(
                [(A @ (L1 @ x)) @ (L2 @ x) for L1 in lifted for L2 in lifted]
            )
            mean_lift = (P * A) @ x
            rhs = (A @ mean_lift) @ mean_lift
            assert abs(lhs - rhs) < 1e-12
