"""Benchmark objectives, noisy wrappers and low-rank problem construction.

Every objective is an :class:`ObjectiveSpec`: a box domain, a vectorised
evaluator and the known global minimum.  Functions are looked up by name
through :func:`get_function` so run configs can refer to them as strings.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ObjectiveSpec",
    "NoisyObjective",
    "LowRankProblem",
    "evaluate",
    "evaluate_noisy",
    "random_orthogonal",
    "make_low_rank",
    "low_rank_problem",
    "scale_domain",
    "get_function",
    "FUNCTIONS",
    "LOW_RANK_BASES",
]


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """A box-constrained test function with a known minimum.

    ``func`` maps a 1-D array of length ``dim`` to a float and is applied
    without any clipping; use :func:`evaluate` for the clipped, checked call.
    """

    name: str
    dim: int
    lower: np.ndarray
    upper: np.ndarray
    func: Callable[[np.ndarray], float] = field(repr=False, compare=False)
    f_star: float = 0.0
    x_star: Optional[np.ndarray] = None

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != (self.dim,) or upper.shape != (self.dim,):
            raise ValueError(f"bounds must have length {self.dim}")
        if not np.all(lower < upper):
            raise ValueError("each lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if self.x_star is not None:
            object.__setattr__(self, "x_star", np.asarray(self.x_star, dtype=float))

    def __call__(self, x) -> float:
        return evaluate(self, x)


def evaluate(spec: ObjectiveSpec, x) -> float:
    """Evaluate ``spec`` at ``x`` after clipping ``x`` into the domain."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != spec.dim:
        raise ValueError(f"{spec.name}: expected {spec.dim} coordinates, got {x.shape[0]}")
    return float(spec.func(np.clip(x, spec.lower, spec.upper)))


class NoisyObjective:
    """Additive Gaussian noise ``f(x) + sigma * eps`` on top of a base objective.

    The noise stream is a seeded generator; :meth:`reset` rewinds it so a
    sequence of evaluations can be replayed exactly.
    """

    def __init__(self, base: ObjectiveSpec, sigma: float, rng_seed: int = 0):
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        self.base = base
        self.sigma = float(sigma)
        self.rng_seed = rng_seed
        self.reset()

    def reset(self):
        self._rng = np.random.default_rng(self.rng_seed)

    def __call__(self, x) -> float:
        return evaluate_noisy(self, x)


def evaluate_noisy(nobj: NoisyObjective, x) -> float:
    value = evaluate(nobj.base, x)
    if nobj.sigma == 0.0:
        return value
    return value + nobj.sigma * float(nobj._rng.standard_normal())


# ---------------------------------------------------------------------------
# Function formulas (Surjanovic & Bingham conventions)
# ---------------------------------------------------------------------------


def ackley(x):
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    a, b, c = 20.0, 0.2, 2.0 * np.pi
    s1 = np.sqrt(np.sum(x**2, axis=-1) / n)
    s2 = np.sum(np.cos(c * x), axis=-1) / n
    return -a * np.exp(-b * s1) - np.exp(s2) + a + np.e


def rosenbrock(x):
    x = np.asarray(x, dtype=float)
    return np.sum(100.0 * (x[..., 1:] - x[..., :-1] ** 2) ** 2 + (1.0 - x[..., :-1]) ** 2, axis=-1)


def styblinski_tang(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * np.sum(x**4 - 16.0 * x**2 + 5.0 * x, axis=-1)


def rastrigin(x):
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    return 10.0 * n + np.sum(x**2 - 10.0 * np.cos(2.0 * np.pi * x), axis=-1)


def levy(x):
    x = np.asarray(x, dtype=float)
    w = 1.0 + (x - 1.0) / 4.0
    head = np.sin(np.pi * w[..., 0]) ** 2
    mid = np.sum((w[..., :-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[..., :-1] + 1.0) ** 2), axis=-1)
    tail = (w[..., -1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w[..., -1]) ** 2)
    return head + mid + tail


def beale(x):
    x = np.asarray(x, dtype=float)
    u, v = x[..., 0], x[..., 1]
    return (1.5 - u + u * v) ** 2 + (2.25 - u + u * v**2) ** 2 + (2.625 - u + u * v**3) ** 2


_HART_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HART3_A = np.array([[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]])
_HART3_P = 1e-4 * np.array([[3689, 1170, 2673], [4699, 4387, 7470], [1091, 8732, 5547], [381, 5743, 8828]])
_HART6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_HART6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)


def _hartmann(x, A, P):
    x = np.asarray(x, dtype=float)
    inner = np.sum(A * (x[..., None, :] - P) ** 2, axis=-1)
    return -np.sum(_HART_ALPHA * np.exp(-inner), axis=-1)


def hartmann3(x):
    return _hartmann(x, _HART3_A, _HART3_P)


def hartmann6(x):
    return _hartmann(x, _HART6_A, _HART6_P)


_SHEKEL_BETA = 0.1 * np.array([1, 2, 2, 4, 4, 6, 3, 7, 5, 5], dtype=float)
_SHEKEL_C = np.array(
    [
        [4.0, 1.0, 8.0, 6.0, 3.0, 2.0, 5.0, 8.0, 6.0, 7.0],
        [4.0, 1.0, 8.0, 6.0, 7.0, 9.0, 3.0, 1.0, 2.0, 3.6],
        [4.0, 1.0, 8.0, 6.0, 3.0, 2.0, 5.0, 8.0, 6.0, 7.0],
        [4.0, 1.0, 8.0, 6.0, 7.0, 9.0, 3.0, 1.0, 2.0, 3.6],
    ]
)


def _shekel(x, m):
    x = np.asarray(x, dtype=float)
    sq = np.sum((x[..., :, None] - _SHEKEL_C[:, :m]) ** 2, axis=-2)
    return -np.sum(1.0 / (sq + _SHEKEL_BETA[:m]), axis=-1)


def shekel5(x):
    return _shekel(x, 5)


def shekel7(x):
    return _shekel(x, 7)


_ST_ARGMIN = -2.9035340279544117

# name -> (formula, fixed dimension or None, (lower, upper), x_star builder)
FUNCTIONS = {
    "ackley": (ackley, None, (-30.0, 30.0), lambda d: np.zeros(d)),
    "levy": (levy, None, (-10.0, 10.0), lambda d: np.ones(d)),
    "rosenbrock": (rosenbrock, None, (-5.0, 10.0), lambda d: np.ones(d)),
    "styblinski_tang": (styblinski_tang, None, (-5.0, 5.0), lambda d: np.full(d, _ST_ARGMIN)),
    "rastrigin": (rastrigin, None, (-5.12, 5.12), lambda d: np.zeros(d)),
    "beale": (beale, 2, (-4.5, 4.5), lambda d: np.array([3.0, 0.5])),
    "hartmann3": (
        hartmann3,
        3,
        (0.0, 1.0),
        lambda d: np.array([0.11458886859137944, 0.5556488945947685, 0.8525469839923088]),
    ),
    "hartmann6": (
        hartmann6,
        6,
        (0.0, 1.0),
        lambda d: np.array(
            [
                0.20168951284088166,
                0.15001069121573468,
                0.47687397552004734,
                0.2753324309510746,
                0.31165161746271286,
                0.6573005329659732,
            ]
        ),
    ),
    "shekel5": (
        shekel5,
        4,
        (0.0, 10.0),
        lambda d: np.array([4.00003715108039, 4.000133275843115, 4.000037153167726, 4.000133276877367]),
    ),
    "shekel7": (
        shekel7,
        4,
        (0.0, 10.0),
        lambda d: np.array([4.0005728207243285, 3.9996062112913022, 4.000572819680596, 3.999606210342713]),
    ),
}

# Low-rank test set bases: name -> (catalog name, native domain)
LOW_RANK_BASES = {
    "ackley": ("ackley", (-5.0, 5.0)),
    "rosenbrock": ("rosenbrock", (-5.0, 10.0)),
    "shekel5": ("shekel5", (0.0, 10.0)),
    "shekel7": ("shekel7", (0.0, 10.0)),
    "styblinski_tang": ("styblinski_tang", (-5.0, 5.0)),
}


def get_function(name: str, dim: Optional[int] = None, domain=None) -> ObjectiveSpec:
    """Build a catalog objective by name.

    ``domain`` overrides the default box with a ``(lower, upper)`` pair of
    scalars; the minimiser must still lie inside it.
    """
    key = name.lower().replace("-", "_")
    if key not in FUNCTIONS:
        raise KeyError(f"unknown function {name!r}; known: {sorted(FUNCTIONS)}")
    func, fixed_dim, default_box, argmin = FUNCTIONS[key]
    if fixed_dim is not None:
        if dim is not None and dim != fixed_dim:
            raise ValueError(f"{key} is defined only for dimension {fixed_dim}")
        dim = fixed_dim
    if dim is None or dim < 1:
        raise ValueError(f"{key} needs a positive dimension")
    if key == "rosenbrock" and dim < 2:
        raise ValueError("rosenbrock needs dimension >= 2")
    lo, hi = default_box if domain is None else domain
    x_star = argmin(dim)
    return ObjectiveSpec(
        name=key,
        dim=dim,
        lower=np.full(dim, lo, dtype=float),
        upper=np.full(dim, hi, dtype=float),
        func=func,
        f_star=float(func(x_star)),
        x_star=x_star,
    )


# ---------------------------------------------------------------------------
# Domain scaling
# ---------------------------------------------------------------------------


class _Rescaled:
    """Evaluate ``func`` after mapping a point of the new box onto the old one."""

    def __init__(self, func, new_lower, new_upper, old_lower, old_upper):
        self.func = func
        self.new_lower = new_lower
        self.scale = (old_upper - old_lower) / (new_upper - new_lower)
        self.old_lower = old_lower

    def to_original(self, x):
        return self.old_lower + (np.asarray(x, dtype=float) - self.new_lower) * self.scale

    def __call__(self, x):
        return self.func(self.to_original(x))


def scale_domain(spec: ObjectiveSpec, lower, upper) -> ObjectiveSpec:
    """Return ``spec`` re-expressed on the box ``[lower, upper]`` by an affine map."""
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (spec.dim,)).copy()
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (spec.dim,)).copy()
    if not np.all(upper - lower > 0):
        raise ValueError("target box is degenerate")
    if np.array_equal(lower, spec.lower) and np.array_equal(upper, spec.upper):
        return spec
    wrapped = _Rescaled(spec.func, lower, upper, spec.lower, spec.upper)
    x_star = None
    if spec.x_star is not None:
        x_star = lower + (spec.x_star - spec.lower) / wrapped.scale
    return replace(spec, lower=lower, upper=upper, func=wrapped, x_star=x_star)


# ---------------------------------------------------------------------------
# Low-rank problems
# ---------------------------------------------------------------------------


def random_orthogonal(D: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR factorisation of a Gaussian matrix."""
    if D < 1:
        raise ValueError("D must be positive")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((D, D))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


@dataclass(frozen=True, eq=False)
class LowRankProblem:
    """``f(x) = base((Q x)[:d_e])`` on ``[-1, 1]^D``.

    The first ``d_e`` rows of ``Q`` span the effective subspace; ``f`` is
    constant along the remaining rows.  Calling the problem does not clip,
    so the constant-subspace property holds on all of R^D.
    """

    base: ObjectiveSpec
    D: int
    Q: np.ndarray = field(repr=False)

    @property
    def d_e(self) -> int:
        return self.base.dim

    @property
    def f_star(self) -> float:
        return self.base.f_star

    @property
    def lower(self):
        return -np.ones(self.D)

    @property
    def upper(self):
        return np.ones(self.D)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.D:
            raise ValueError(f"expected {self.D} coordinates, got {x.shape[-1]}")
        y = x @ self.Q[: self.d_e].T
        return self.base.func(y)

    @property
    def x_star(self):
        if self.base.x_star is None:
            return None
        return self.Q[: self.d_e].T @ self.base.x_star

    def as_objective(self) -> ObjectiveSpec:
        return ObjectiveSpec(
            name=f"lowrank_{self.base.name}",
            dim=self.D,
            lower=self.lower,
            upper=self.upper,
            func=self,
            f_star=self.f_star,
            x_star=self.x_star,
        )


def make_low_rank(base: ObjectiveSpec, D: int, seed: int = 0, Q: Optional[np.ndarray] = None) -> LowRankProblem:
    """Embed ``base`` (already on ``[-1, 1]^{d_e}``) in ``D`` dimensions behind a random rotation.

    Pass ``Q`` explicitly to bypass the seeded sampler (e.g. the identity).
    """
    if D < base.dim:
        raise ValueError(f"ambient dimension {D} is below the effective dimension {base.dim}")
    if not (np.allclose(base.lower, -1.0) and np.allclose(base.upper, 1.0)):
        raise ValueError("base domain must be scaled to [-1, 1] first")
    if Q is None:
        Q = random_orthogonal(D, seed)
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (D, D):
        raise ValueError(f"Q must be {D}x{D}")
    return LowRankProblem(base=base, D=D, Q=Q)


def low_rank_problem(name: str, D: int, seed: int = 0, d_e: int = 4) -> LowRankProblem:
    """Build a member of the low-rank test set from its base function name."""
    key = name.lower().replace("-", "_")
    if key.startswith("lowrank_"):
        key = key[len("lowrank_"):]
    if key not in LOW_RANK_BASES:
        raise KeyError(f"unknown low-rank base {name!r}; known: {sorted(LOW_RANK_BASES)}")
    fname, box = LOW_RANK_BASES[key]
    base = get_function(fname, d_e, domain=box)
    return make_low_rank(scale_domain(base, -1.0, 1.0), D, seed)
