"""Performance and data profiles for comparing solvers on a problem set.

A profile instance is a ``(problem, seed)`` pair.  Each solver contributes
one :class:`SolverRecord` per instance with its best-so-far history.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

__all__ = [
    "SolverRecord",
    "ProfileCurve",
    "evals_to_accuracy",
    "cost_table",
    "performance_profile",
    "data_profile",
    "solved_fraction",
]

INF = math.inf


@dataclass(frozen=True, eq=False)
class SolverRecord:
    solver: str
    problem: str
    n_p: int
    history: np.ndarray
    f_star: float
    f0_star: float

    def __post_init__(self):
        h = np.asarray(self.history, dtype=float)
        if h.ndim != 1:
            raise ValueError("history must be one-dimensional")
        if np.any(np.diff(h) > 0):
            raise ValueError("history must be non-increasing (best-so-far values)")
        object.__setattr__(self, "history", h)


@dataclass(frozen=True, eq=False)
class ProfileCurve:
    solver: str
    alpha: np.ndarray
    fraction: np.ndarray


def evals_to_accuracy(record: SolverRecord, tau: float) -> float:
    """Evaluations needed to reach ``f* + tau (f0 - f*)``; ``inf`` if never.

    Returns 0 when the initial design already attains ``f*``.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    if record.f0_star <= record.f_star:
        return 0
    threshold = record.f_star + tau * (record.f0_star - record.f_star)
    hit = np.flatnonzero(record.history <= threshold)
    return int(hit[0]) + 1 if hit.size else INF


def cost_table(records: Iterable[SolverRecord], tau: float):
    """``(solvers, problems, M)`` with ``M[p, s]`` the evaluation count of solver s on instance p."""
    records = list(records)
    solvers = sorted({r.solver for r in records})
    problems = sorted({r.problem for r in records})
    M = np.full((len(problems), len(solvers)), INF)
    n_p = np.zeros(len(problems), dtype=int)
    si = {s: i for i, s in enumerate(solvers)}
    pi = {p: i for i, p in enumerate(problems)}
    seen = set()
    for r in records:
        key = (r.problem, r.solver)
        if key in seen:
            raise ValueError(f"duplicate record for solver {r.solver!r} on {r.problem!r}")
        seen.add(key)
        M[pi[r.problem], si[r.solver]] = evals_to_accuracy(r, tau)
        n_p[pi[r.problem]] = r.n_p
    return solvers, problems, M, n_p


def _alpha_grid(ratios, alphas):
    if alphas is not None:
        return np.asarray(alphas, dtype=float)
    finite = ratios[np.isfinite(ratios)]
    top = max(1.0, float(finite.max())) if finite.size else 1.0
    n = int(math.ceil(math.log2(top)))
    return 2.0 ** np.arange(0, n + 1, dtype=float) if n > 0 else np.array([1.0])


def performance_profile(records, tau: float, alphas: Optional[Sequence[float]] = None) -> List[ProfileCurve]:
    """Fraction of instances with cost ratio ``M/min M <= alpha``, on a power-of-two grid.

    Instances nobody solves stay in the denominator.  A solver needing zero
    evaluations where the best also needs zero gets ratio 1.
    """
    solvers, problems, M, _ = cost_table(records, tau)
    best = M.min(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(np.isfinite(M), M / best, INF)
    ratios = np.where(np.isfinite(M) & (best == 0), np.where(M == 0, 1.0, INF), ratios)
    grid = _alpha_grid(ratios, alphas)
    n = len(problems)
    return [
        ProfileCurve(s, grid, np.array([np.sum(ratios[:, j] <= a) / n for a in grid]))
        for j, s in enumerate(solvers)
    ]


def data_profile(records, tau: float, N_g: int) -> List[ProfileCurve]:
    """Fraction of instances solved within ``alpha (n_p + 1)`` evaluations, ``alpha = 0..N_g``."""
    if N_g <= 0:
        raise ValueError("N_g must be positive")
    solvers, problems, M, n_p = cost_table(records, tau)
    grid = np.arange(0, int(N_g) + 1, dtype=float)
    budget = grid[None, :] * (n_p[:, None] + 1)
    n = len(problems)
    out = []
    for j, s in enumerate(solvers):
        frac = np.sum(M[:, j][:, None] <= budget, axis=0) / n
        out.append(ProfileCurve(s, grid, frac))
    return out


def solved_fraction(records, tau: float) -> Dict[str, float]:
    solvers, _, M, _ = cost_table(records, tau)
    return {s: float(np.mean(np.isfinite(M[:, j]))) for j, s in enumerate(solvers)}
