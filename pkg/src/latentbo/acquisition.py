"""Expected improvement and its maximisation over a box."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .gp import GPPosterior, predict

__all__ = ["AcqConfig", "expected_improvement", "maximize_acquisition"]

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class AcqConfig:
    n_raw: int = 512
    n_refine: int = 8
    max_local_steps: int = 100
    tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if min(self.n_raw, self.n_refine, self.max_local_steps) < 1:
            raise ValueError("acquisition counts must be positive")
        if self.n_refine > self.n_raw:
            raise ValueError("n_refine cannot exceed n_raw")


def expected_improvement(mean, std, best):
    """EI for minimisation: ``E[max(best - Y, 0)]`` with ``Y ~ N(mean, std^2)``.

    Zero wherever ``std == 0``.  Broadcasts over array arguments.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    diff = best - mean
    pos = std > 0
    safe = np.where(pos, std, 1.0)
    with np.errstate(over="ignore"):  # tiny std: z*z -> inf, exp -> 0
        z = diff / safe
        ei = diff * ndtr(z) + safe * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    ei = np.where(pos, np.maximum(ei, 0.0), 0.0)
    return ei if ei.ndim else float(ei)


def _ei_at(gp: GPPosterior, X, best):
    mean, var = predict(gp, X, standardised=True)
    return expected_improvement(mean, np.sqrt(var), best)


def _pattern_search(gp, x, value, lower, upper, best, cfg):
    """Coordinate pattern search: poll +/- step on every axis, halve the step on failure."""
    m = x.shape[0]
    width = upper - lower
    step = 0.1 * width
    eye = np.eye(m)
    for _ in range(cfg.max_local_steps):
        if np.all(step <= cfg.tol * np.maximum(width, 1e-300)):
            break
        polls = np.concatenate([x + eye * step, x - eye * step])
        polls = np.clip(polls, lower, upper)
        vals = _ei_at(gp, polls, best)
        j = int(np.argmax(vals))
        if vals[j] > value:
            x, value = polls[j], float(vals[j])
        else:
            step = step * 0.5
    return x, value


def maximize_acquisition(gp: GPPosterior, lower, upper, cfg: AcqConfig = AcqConfig()):
    """Approximate argmax of EI over ``[lower, upper]``.

    Uniform random candidates are ranked by EI, the best ``n_refine`` are
    polished with pattern search, and the overall winner is returned (ties
    go to the lowest candidate index).
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(upper - lower < 1e-12):
        return 0.5 * (lower + upper)
    best = float(np.min(gp.y))
    rng = np.random.default_rng(cfg.seed)
    cand = lower + (upper - lower) * rng.random((cfg.n_raw, lower.shape[0]))
    ei = _ei_at(gp, cand, best)
    order = np.argsort(-ei, kind="stable")[: cfg.n_refine]
    best_x, best_val = None, -np.inf
    for i in order:
        x, val = _pattern_search(gp, cand[i], float(ei[i]), lower, upper, best, cfg)
        if val > best_val:
            best_x, best_val = x, val
    return np.clip(best_x, lower, upper)
