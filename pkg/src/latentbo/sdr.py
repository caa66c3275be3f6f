"""Sequential domain reduction: pan/zoom contraction of a region of interest."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "SDRParams",
    "SDRState",
    "sdr_init",
    "sdr_update",
    "sdr_should_update",
    "sdr_trim",
    "sdr_step",
    "contraction_rate",
]

LAMBDA_MIN = 0.3
LAMBDA_MAX = 1.5
_GATE_RTOL = 1e-9


@dataclass(frozen=True)
class SDRParams:
    gamma_o: float = 0.7
    gamma_p: float = 1.0
    eta: float = 0.9
    t: float = 0.5
    xi: int = 1

    def __post_init__(self):
        if not 0 < self.gamma_o <= 1:
            raise ValueError("gamma_o must lie in (0, 1]")
        if self.gamma_p <= 0:
            raise ValueError("gamma_p must be positive")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.t <= 0:
            raise ValueError("t must be positive")
        if int(self.xi) != self.xi or self.xi < 1:
            raise ValueError("xi must be a positive integer")


@dataclass(frozen=True, eq=False)
class SDRState:
    lower: np.ndarray
    upper: np.ndarray
    x_prev: np.ndarray
    d_prev: np.ndarray
    lower0: np.ndarray
    upper0: np.ndarray
    params: SDRParams
    k: int = 0

    @property
    def r(self):
        return self.upper - self.lower


def sdr_trim(lower, upper, lower0, upper0, t: float):
    """Intersect a box with the initial box ``R0``.

    Coordinates whose intersection is empty, or narrower than ``t``, are
    widened to ``t`` (capped at the ``R0`` width) against the nearest face.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    lower0 = np.asarray(lower0, dtype=float)
    upper0 = np.asarray(upper0, dtype=float)
    lo = np.maximum(lower, lower0)
    hi = np.minimum(upper, upper0)
    width = np.minimum(t, upper0 - lower0)
    narrow = ~(hi - lo >= width)
    if np.any(narrow):
        centre = np.clip(0.5 * (lower + upper), lower0, upper0)
        lo_n = np.clip(centre - 0.5 * width, lower0, upper0 - width)
        lo = np.where(narrow, lo_n, lo)
        hi = np.where(narrow, lo_n + width, hi)
    return lo, hi


def sdr_init(x0, lower, upper, params: SDRParams) -> SDRState:
    """Centre a box with the sides of ``[lower, upper]`` at ``x0`` and trim it."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x0 = np.clip(np.asarray(x0, dtype=float), lower, upper)
    r0 = upper - lower
    lo, hi = sdr_trim(x0 - 0.5 * r0, x0 + 0.5 * r0, lower, upper, params.t)
    return SDRState(lo, hi, x0, np.zeros_like(x0), lower.copy(), upper.copy(), params, 0)


def contraction_rate(d, d_prev, params: SDRParams):
    """Per-coordinate zoom factor from the current and previous scaled steps."""
    c = d * d_prev
    c_hat = np.sign(c) * np.sqrt(np.abs(c))
    gamma = 0.5 * (params.gamma_p * (1.0 + c_hat) + params.gamma_o * (1.0 - c_hat))
    lam = params.eta + np.abs(d) * (gamma - params.eta)
    return np.clip(lam, LAMBDA_MIN, LAMBDA_MAX)


def sdr_update(state: SDRState, x_k) -> SDRState:
    """Contract/pan the region around the incumbent ``x_k``.

    Sides never shrink below ``t``; coordinates at the floor still pan.
    """
    p = state.params
    x_k = np.asarray(x_k, dtype=float)
    r = state.r
    d = 2.0 * (x_k - state.x_prev) / r
    lam = contraction_rate(d, state.d_prev, p)
    r_new = np.maximum(lam * r, np.minimum(p.t, r))
    lo, hi = sdr_trim(x_k - 0.5 * r_new, x_k + 0.5 * r_new, state.lower0, state.upper0, p.t)
    return replace(state, lower=lo, upper=hi, x_prev=x_k.copy(), d_prev=d)


def sdr_should_update(state: SDRState) -> bool:
    p = state.params
    return state.k % p.xi == 0 and bool(np.all(state.r >= p.t * (1.0 - _GATE_RTOL)))


def sdr_step(state: SDRState, incumbent) -> SDRState:
    """One loop iteration: update if scheduled, then advance the counter."""
    if sdr_should_update(state):
        state = sdr_update(state, incumbent)
    return replace(state, k=state.k + 1)
