"""BO with domain reduction, three latent-space BO-VAE variants, and REMBO.

Every optimiser returns a :class:`RunTrace` with one record per objective
evaluation: the initial design first (``iteration == 0``), then one record
per BO iteration (``iteration = 1..B``).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from . import gp as gpmod
from .acquisition import AcqConfig, maximize_acquisition
from .dml import DMLConfig
from .sdr import SDRParams, sdr_init, sdr_step
from .vae import TrainConfig, VAEModel, decode, encode, retrain

__all__ = [
    "ALGORITHMS",
    "RunConfig",
    "IterationRecord",
    "RunTrace",
    "clip_to_domain",
    "initial_design",
    "initial_design_from_pool",
    "pool_initial_size",
    "bo_sdr",
    "bo_vae",
    "bo_vae_retrain",
    "bo_vae_dml",
    "rembo",
    "rembo_embedding",
    "run_algorithm",
]

ALGORITHMS = {
    "bo": "BO",
    "bo_sdr": "BO-SDR",
    "v_bovae": "V-BOVAE",
    "r_bovae": "R-BOVAE",
    "s_bovae": "S-BOVAE",
    "rembo": "REMBO",
}


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "bo_sdr"
    budget: int = 350
    n_initial: Optional[int] = None
    q: int = 50
    seed: int = 0
    sdr: Optional[SDRParams] = field(default_factory=SDRParams)
    dml: DMLConfig = field(default_factory=DMLConfig)
    retrain: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=2, batch=256, lr=1e-3))
    acq: AcqConfig = field(default_factory=AcqConfig)
    gp_restarts: int = 5
    latent_bound: float = 5.0
    d_e: Optional[int] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if self.q < 1:
            raise ValueError("q must be at least 1")
        if self.n_initial is not None and self.n_initial < 2:
            raise ValueError("need at least two initial points")

    @property
    def cycles(self) -> int:
        return math.ceil(self.budget / self.q) if self.budget else 0


@dataclass
class IterationRecord:
    iteration: int
    eval_count: int
    x: np.ndarray
    f: float
    f_best: float
    gap: float
    lower: np.ndarray
    upper: np.ndarray
    z: Optional[np.ndarray] = None
    wall: float = 0.0


@dataclass
class RunTrace:
    algorithm: str
    f_star: float
    n_initial: int
    records: List[IterationRecord] = field(default_factory=list)

    @property
    def f_best(self) -> np.ndarray:
        return np.array([r.f_best for r in self.records])

    @property
    def best(self) -> float:
        return float(self.records[-1].f_best)

    @property
    def f0_best(self) -> float:
        return float(self.records[self.n_initial - 1].f_best)

    def incumbent_by_iteration(self) -> np.ndarray:
        """Best value after the initial design and after each BO iteration."""
        return self.f_best[self.n_initial - 1 :]


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def clip_to_domain(x, lower, upper):
    return np.clip(np.asarray(x, dtype=float), lower, upper)


def _bounds(objective):
    spec = objective if hasattr(objective, "lower") else objective.base
    return np.asarray(spec.lower, dtype=float), np.asarray(spec.upper, dtype=float), float(spec.f_star)


def _seed(seed: int, *path) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


class _Recorder:
    def __init__(self, objective: Callable, algorithm: str, f_star: float, n_initial: int, lower, upper):
        self.objective = objective
        self.trace = RunTrace(algorithm, f_star, n_initial)
        self.lower, self.upper = lower, upper
        self.best = np.inf
        self._t = time.perf_counter()

    def evaluate(self, x, iteration, region, z=None) -> float:
        x = clip_to_domain(x, self.lower, self.upper)
        f = float(self.objective(x))
        self.best = min(self.best, f)
        now = time.perf_counter()
        self.trace.records.append(
            IterationRecord(
                iteration=iteration,
                eval_count=len(self.trace.records) + 1,
                x=x,
                f=f,
                f_best=self.best,
                gap=self.best - self.trace.f_star,
                lower=np.array(region[0], dtype=float),
                upper=np.array(region[1], dtype=float),
                z=None if z is None else np.array(z, dtype=float),
                wall=now - self._t,
            )
        )
        self._t = now
        return f


def initial_design(objective, N: int, seed: int):
    """``N`` uniform points in the objective's box with their values."""
    if N < 2:
        raise ValueError("N must be at least 2")
    lower, upper, _ = _bounds(objective)
    rng = np.random.default_rng(_seed(seed, 0))
    X = lower + (upper - lower) * rng.random((N, lower.shape[0]))
    return X, np.array([float(objective(x)) for x in X])


def pool_initial_size(M: int) -> int:
    """One percent of the unlabelled pool, at least two points."""
    return max(2, math.ceil(0.01 * M))


def initial_design_from_pool(pool, seed: int, N: Optional[int] = None):
    """Uniformly pick ``N`` distinct rows of the unlabelled pool (default 1% of it)."""
    pool = np.atleast_2d(np.asarray(pool, dtype=float))
    N = pool_initial_size(len(pool)) if N is None else N
    rng = np.random.default_rng(_seed(seed, 0))
    idx = rng.choice(len(pool), size=N, replace=False)
    return pool[np.sort(idx)]


def _propose(inputs, values, lower, upper, cfg: RunConfig, k: int):
    gp = gpmod.fit(inputs, values, restarts=cfg.gp_restarts, seed=_seed(cfg.seed, 1, k))
    acq = replace(cfg.acq, seed=_seed(cfg.seed, 2, k))
    return maximize_acquisition(gp, lower, upper, acq)


# ---------------------------------------------------------------------------
# ambient BO with SDR
# ---------------------------------------------------------------------------


def bo_sdr(objective, cfg: RunConfig) -> RunTrace:
    """Expected-improvement BO in the ambient box; SDR when ``cfg.sdr`` is set."""
    lower, upper, f_star = _bounds(objective)
    D = lower.shape[0]
    N = cfg.n_initial if cfg.n_initial is not None else 2 * D
    rec = _Recorder(objective, cfg.algorithm, f_star, N, lower, upper)
    rng = np.random.default_rng(_seed(cfg.seed, 0))
    X = list(lower + (upper - lower) * rng.random((N, D)))
    y = [rec.evaluate(x, 0, (lower, upper)) for x in X]
    X = [r.x for r in rec.trace.records]

    state = sdr_init(0.5 * (lower + upper), lower, upper, cfg.sdr) if cfg.sdr is not None else None
    width = upper - lower
    for k in range(cfg.budget):
        lo, hi = (state.lower, state.upper) if state is not None else (lower, upper)
        U = (np.array(X) - lower) / width
        u = _propose(U, np.array(y), (lo - lower) / width, (hi - lower) / width, cfg, k)
        x = lower + u * width
        y.append(rec.evaluate(x, k + 1, (lo, hi)))
        X.append(rec.trace.records[-1].x)
        if state is not None:
            state = sdr_step(state, X[int(np.argmin(y))])
    return rec.trace


# ---------------------------------------------------------------------------
# latent-space BO
# ---------------------------------------------------------------------------


def _latent_loop(rec, model, Z, y, X, iterations, k0, cfg, use_sdr, rng):
    """Run ``iterations`` BO steps in the latent box, appending to Z, y and X in place."""
    d = model.d
    R_lo = -cfg.latent_bound * np.ones(d)
    R_hi = cfg.latent_bound * np.ones(d)
    state = sdr_init(np.zeros(d), R_lo, R_hi, cfg.sdr) if (use_sdr and cfg.sdr is not None) else None
    for k in range(k0, k0 + iterations):
        lo, hi = (state.lower, state.upper) if state is not None else (R_lo, R_hi)
        z = _propose(np.array(Z), np.array(y), lo, hi, cfg, k)
        x = decode(model, z, rng)
        y.append(rec.evaluate(x, k + 1, (lo, hi), z=z))
        Z.append(z)
        X.append(rec.trace.records[-1].x)
        if state is not None:
            state = sdr_step(state, Z[int(np.argmin(y))])


def _labelled_start(objective, pool, cfg, d):
    lower, upper, f_star = _bounds(objective)
    X0 = initial_design_from_pool(pool, cfg.seed, cfg.n_initial)
    rec = _Recorder(objective, cfg.algorithm, f_star, len(X0), lower, upper)
    latent = cfg.latent_bound * np.ones(d)
    y = [rec.evaluate(x, 0, (-latent, latent)) for x in X0]
    X = [r.x for r in rec.trace.records]
    return rec, X, y


def bo_vae(objective, model: VAEModel, cfg: RunConfig, pool) -> RunTrace:
    """BO in the latent space of a pre-trained VAE, with latent SDR when ``cfg.sdr`` is set."""
    rec, X, y = _labelled_start(objective, pool, cfg, model.d)
    Z = list(encode(model, np.array(X))[0])
    rng = np.random.default_rng(_seed(cfg.seed, 4))
    _latent_loop(rec, model, Z, y, X, cfg.budget, 0, cfg, True, rng)
    return rec.trace


def _retraining_run(objective, model, cfg, pool, with_dml):
    rec, X, y = _labelled_start(objective, pool, cfg, model.d)
    rng = np.random.default_rng(_seed(cfg.seed, 4))
    done = 0
    for cycle in range(cfg.cycles):
        tcfg = replace(cfg.retrain, seed=_seed(cfg.seed, 3, cycle))
        model = retrain(model, np.array(X), tcfg, f=np.array(y), dml=cfg.dml if with_dml else None)
        Z = list(encode(model, np.array(X))[0])
        steps = min(cfg.q, cfg.budget - done)
        _latent_loop(rec, model, Z, y, X, steps, done, cfg, not with_dml, rng)
        done += steps
    return rec.trace


def bo_vae_retrain(objective, model: VAEModel, cfg: RunConfig, pool) -> RunTrace:
    """Retrain the VAE every ``q`` evaluations, re-encode, and restart latent SDR."""
    return _retraining_run(objective, model, cfg, pool, with_dml=False)


def bo_vae_dml(objective, model: VAEModel, cfg: RunConfig, pool) -> RunTrace:
    """Retraining with the soft-triplet term; EI over the fixed latent box, no SDR."""
    return _retraining_run(objective, model, cfg, pool, with_dml=True)


# ---------------------------------------------------------------------------
# REMBO
# ---------------------------------------------------------------------------


def rembo_embedding(D: int, d_e: int, seed: int):
    """Gaussian embedding matrix ``A`` (D x (d_e + 1)) and box radius ``2.2 sqrt(d_e)``."""
    d = d_e + 1
    A = np.random.default_rng(_seed(seed, 5)).standard_normal((D, d))
    return A, 2.2 * math.sqrt(d_e)


def rembo(objective, d_e: int, cfg: RunConfig) -> RunTrace:
    """BO over ``y`` in ``[-delta, delta]^d`` with queries ``x = clip(A y)``."""
    lower, upper, f_star = _bounds(objective)
    A, delta = rembo_embedding(lower.shape[0], d_e, cfg.seed)
    d = A.shape[1]
    y_lo, y_hi = -delta * np.ones(d), delta * np.ones(d)
    N = cfg.n_initial if cfg.n_initial is not None else 2 * d
    rec = _Recorder(objective, cfg.algorithm, f_star, N, lower, upper)
    rng = np.random.default_rng(_seed(cfg.seed, 0))
    Y = list(y_lo + (y_hi - y_lo) * rng.random((N, d)))
    f = [rec.evaluate(A @ yy, 0, (y_lo, y_hi), z=yy) for yy in Y]
    width = y_hi - y_lo
    zero, one = np.zeros(d), np.ones(d)
    for k in range(cfg.budget):
        u = _propose((np.array(Y) - y_lo) / width, np.array(f), zero, one, cfg, k)
        yy = y_lo + u * width
        f.append(rec.evaluate(A @ yy, k + 1, (y_lo, y_hi), z=yy))
        Y.append(yy)
    return rec.trace


def run_algorithm(objective, cfg: RunConfig, model: Optional[VAEModel] = None, pool=None) -> RunTrace:
    """Dispatch on ``cfg.algorithm``."""
    algo = cfg.algorithm
    if algo in ("bo", "bo_sdr"):
        if algo == "bo":
            cfg = replace(cfg, sdr=None)
        return bo_sdr(objective, cfg)
    if algo == "rembo":
        if cfg.d_e is None:
            raise ValueError("rembo needs the effective dimension d_e")
        return rembo(objective, cfg.d_e, cfg)
    if model is None or pool is None:
        raise ValueError(f"{algo} needs a pre-trained VAE and its training pool")
    if algo == "v_bovae":
        return bo_vae(objective, model, cfg, pool)
    if algo == "r_bovae":
        return bo_vae_retrain(objective, model, cfg, pool)
    return bo_vae_dml(objective, model, cfg, pool)
