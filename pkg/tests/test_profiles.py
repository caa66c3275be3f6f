import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentbo.profiles import (
    SolverRecord,
    cost_table,
    data_profile,
    evals_to_accuracy,
    performance_profile,
    solved_fraction,
)


def rec_hitting(solver, problem, k, length=40, n_p=2):
    """History that first reaches the tau = 0.1 threshold at evaluation ``k`` (or never when k is None)."""
    h = np.full(length, 10.0)
    if k is not None:
        h[k - 1 :] = 0.5
    return SolverRecord(solver, problem, n_p, h, 0.0, 10.0)


def curves(profile):
    return {c.solver: c for c in profile}


def test_history_must_be_monotone():
    with pytest.raises(ValueError):
        SolverRecord("a", "p", 1, [3.0, 4.0], 0.0, 5.0)


def test_evals_examples():
    r = SolverRecord("a", "p", 1, [10, 5, 0.9, 0.5], 0.0, 10.0)
    assert evals_to_accuracy(r, 0.1) == 3
    assert evals_to_accuracy(SolverRecord("a", "p", 1, [0.5, 0.4], 0.0, 10.0), 0.1) == 1
    assert evals_to_accuracy(SolverRecord("a", "p", 1, [9.0, 8.0], 0.0, 10.0), 0.1) == math.inf
    assert evals_to_accuracy(SolverRecord("a", "p", 1, [1.0], 1.0, 1.0), 0.1) == 0
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            evals_to_accuracy(r, bad)


def test_two_solver_fixture_exact():
    recs = [rec_hitting("A", "p", 10), rec_hitting("B", "p", 20)]
    pp = curves(performance_profile(recs, 0.1))
    assert list(pp["A"].alpha) == [1.0, 2.0]
    assert list(pp["A"].fraction) == [1.0, 1.0]
    assert list(pp["B"].fraction) == [0.0, 1.0]


def test_single_solver_and_unsolved_problem():
    recs = [rec_hitting("A", "p1", 5), rec_hitting("A", "p2", None), rec_hitting("A", "p3", 12)]
    pp = curves(performance_profile(recs, 0.1))
    assert pp["A"].fraction[0] == pytest.approx(2 / 3)
    assert solved_fraction(recs, 0.1) == {"A": pytest.approx(2 / 3)}
    _, _, M, _ = cost_table(recs, 0.1)
    assert math.isinf(M[1, 0])


def test_problem_nobody_solves_stays_in_denominator():
    recs = [rec_hitting("A", "p1", 3), rec_hitting("B", "p1", 6), rec_hitting("A", "p2", None), rec_hitting("B", "p2", None)]
    pp = curves(performance_profile(recs, 0.1, alphas=[1, 2, 4, 1e9]))
    assert list(pp["A"].fraction) == [0.5, 0.5, 0.5, 0.5]
    assert list(pp["B"].fraction) == [0.0, 0.5, 0.5, 0.5]


def test_duplicate_records_rejected():
    with pytest.raises(ValueError):
        cost_table([rec_hitting("A", "p", 3), rec_hitting("A", "p", 4)], 0.1)


def test_data_profile_threshold():
    r = rec_hitting("A", "p", 30, n_p=9)
    dp = data_profile([r], 0.1, N_g=5)[0]
    assert list(dp.alpha) == [0, 1, 2, 3, 4, 5]
    assert list(dp.fraction) == [0, 0, 0, 1, 1, 1]
    with pytest.raises(ValueError):
        data_profile([r], 0.1, 0)


def random_records(seed, n_solvers=3, n_problems=5):
    rng = np.random.default_rng(seed)
    out = []
    for p in range(n_problems):
        n_p = int(rng.integers(1, 6))
        for s in range(n_solvers):
            k = None if rng.random() < 0.25 else int(rng.integers(1, 40))
            out.append(rec_hitting(f"s{s}", f"p{p}", k, n_p=n_p))
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_profile_properties(seed):
    recs = random_records(seed)
    solved = solved_fraction(recs, 0.1)
    _, _, M, _ = cost_table(recs, 0.1)
    pp = performance_profile(recs, 0.1)
    dp = curves(data_profile(recs, 0.1, N_g=100))
    for c in pp:
        assert np.all(np.diff(c.fraction) >= 0) and np.all(c.fraction <= 1)
        assert c.fraction[-1] == pytest.approx(solved[c.solver])
        assert dp[c.solver].fraction[-1] == pytest.approx(solved[c.solver])
        assert dp[c.solver].fraction[0] == 0
    # only the fastest solver(s) on a problem have ratio one
    s1 = {c.solver: c.fraction[0] for c in pp}
    fastest = np.sum(np.isfinite(M) & (M == M.min(axis=1, keepdims=True)), axis=0)
    for j, s in enumerate(sorted(s1)):
        assert s1[s] == pytest.approx(fastest[j] / M.shape[0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_performance_profile_scale_invariant(seed, c):
    recs = random_records(seed, n_problems=4)
    scaled = []
    for r in recs:
        k = evals_to_accuracy(r, 0.1)
        scaled.append(rec_hitting(r.solver, r.problem, None if math.isinf(k) else int(k) * c, length=40 * c, n_p=r.n_p))
    grid = [1, 1.5, 2, 3, 8, 40]
    a = curves(performance_profile(recs, 0.1, alphas=grid))
    b = curves(performance_profile(scaled, 0.1, alphas=grid))
    for s in a:
        assert np.array_equal(a[s].fraction, b[s].fraction)
