"""Triplet losses that pull latent points with similar objective values together."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .nn import softplus

__all__ = [
    "DMLConfig",
    "normalise_values",
    "split_positive_negative",
    "hard_triplet_loss",
    "smoother",
    "triplet_weights",
    "soft_triplet_loss",
    "sample_triplets",
    "soft_triplet_batch",
    "metric_hook",
    "dml_elbo",
]


@dataclass(frozen=True)
class DMLConfig:
    eta: float = 0.01
    nu: float = 0.2
    rho: float = 0.1
    p: float = 2.0
    triplets_per_batch: int = 64

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1) on the normalised value scale")
        if self.nu <= 0 or self.rho <= 0 or self.p < 1:
            raise ValueError("nu and rho must be positive and p >= 1")
        if self.triplets_per_batch < 0:
            raise ValueError("triplets_per_batch must be non-negative")


def normalise_values(f):
    """Min-max scale to ``[0, 1]``; a constant vector maps to zeros."""
    f = np.asarray(f, dtype=float)
    lo, hi = float(np.min(f)), float(np.max(f))
    if hi - lo <= 0:
        return np.zeros_like(f)
    return (f - lo) / (hi - lo)


def split_positive_negative(f, base_index: int, eta: float):
    """Indices whose value is within ``eta`` of the base (positives) and the rest (negatives)."""
    f = np.asarray(f, dtype=float)
    gap = np.abs(f - f[base_index])
    idx = np.arange(len(f))
    keep = idx != base_index
    pos = idx[keep & (gap < eta)]
    neg = idx[keep & (gap >= eta)]
    return pos, neg


def _pnorm(v, p):
    return np.sum(np.abs(v) ** p, axis=-1) ** (1.0 / p)


def hard_triplet_loss(z_b, z_p, z_n, rho: float, p: float = 2.0) -> float:
    z_b, z_p, z_n = (np.asarray(a, dtype=float) for a in (z_b, z_p, z_n))
    return float(max(0.0, _pnorm(z_b - z_p, p) + rho - _pnorm(z_b - z_n, p)))


def smoother(a, nu: float):
    return np.tanh(np.asarray(a, dtype=float) / (2.0 * nu))


def triplet_weights(f_i, f_j, f_k, cfg: DMLConfig):
    """``(w_ij, w_ik)``, clipped to ``[0, 1]``."""
    gp = np.abs(np.asarray(f_i) - np.asarray(f_j))
    gn = np.abs(np.asarray(f_i) - np.asarray(f_k))
    w_ij = smoother(cfg.eta - gp, cfg.nu) / smoother(cfg.eta, cfg.nu)
    w_ik = smoother(gn - cfg.eta, cfg.nu) / smoother(1.0 - cfg.eta, cfg.nu)
    return np.clip(w_ij, 0.0, 1.0), np.clip(w_ik, 0.0, 1.0)


def soft_triplet_loss(z_i, z_j, z_k, f_i, f_j, f_k, cfg: DMLConfig, weighted: bool = True) -> float:
    """Weighted soft triplet loss; zero unless j is a positive and k a negative of i."""
    if not (abs(f_i - f_j) < cfg.eta and abs(f_i - f_k) >= cfg.eta):
        return 0.0
    z_i, z_j, z_k = (np.asarray(a, dtype=float) for a in (z_i, z_j, z_k))
    d_pos = _pnorm(z_i - z_j, cfg.p)
    d_neg = _pnorm(z_i - z_k, cfg.p)
    loss = float(softplus(d_pos - d_neg))
    if weighted:
        w_ij, w_ik = triplet_weights(f_i, f_j, f_k, cfg)
        loss *= float(w_ij * w_ik)
    return loss


def sample_triplets(f, cfg: DMLConfig, rng: np.random.Generator):
    """Draw ``(base, positive, negative)`` index triples uniformly.

    Bases are restricted to points that have at least one positive and one
    negative.  Returns an ``(n, 3)`` integer array, possibly empty.
    """
    f = np.asarray(f, dtype=float)
    n = len(f)
    empty = np.zeros((0, 3), dtype=int)
    if cfg.triplets_per_batch == 0 or n < 3:
        return empty
    gap = np.abs(f[:, None] - f[None, :])
    off = ~np.eye(n, dtype=bool)
    pos = (gap < cfg.eta) & off
    neg = (gap >= cfg.eta) & off
    bases = np.flatnonzero(pos.any(axis=1) & neg.any(axis=1))
    if len(bases) == 0:
        return empty
    out = np.empty((cfg.triplets_per_batch, 3), dtype=int)
    for t in range(cfg.triplets_per_batch):
        b = bases[rng.integers(len(bases))]
        pj = np.flatnonzero(pos[b])
        nk = np.flatnonzero(neg[b])
        out[t] = (b, pj[rng.integers(len(pj))], nk[rng.integers(len(nk))])
    return out


def _pnorm_grad(v, d, p):
    safe = np.where(d > 0, d, 1.0)[:, None]
    g = np.sign(v) * np.abs(v) ** (p - 1.0) / safe ** (p - 1.0)
    return np.where((d > 0)[:, None], g, 0.0)


def soft_triplet_batch(z, f, triplets, cfg: DMLConfig):
    """Mean weighted soft-triplet loss over ``triplets`` and its gradient w.r.t. ``z``."""
    z = np.asarray(z, dtype=float)
    grad = np.zeros_like(z)
    if len(triplets) == 0:
        return 0.0, grad
    i, j, k = triplets.T
    w_ij, w_ik = triplet_weights(f[i], f[j], f[k], cfg)
    w = w_ij * w_ik
    v_pos = z[i] - z[j]
    v_neg = z[i] - z[k]
    d_pos = _pnorm(v_pos, cfg.p)
    d_neg = _pnorm(v_neg, cfg.p)
    a = d_pos - d_neg
    T = len(triplets)
    loss = float(np.sum(softplus(a) * w) / T)
    s = (expit(a) * w / T)[:, None]
    g_pos = s * _pnorm_grad(v_pos, d_pos, cfg.p)
    g_neg = s * _pnorm_grad(v_neg, d_neg, cfg.p)
    np.add.at(grad, i, g_pos - g_neg)
    np.add.at(grad, j, -g_pos)
    np.add.at(grad, k, g_neg)
    return loss, grad


def metric_hook(f_norm, cfg: DMLConfig, rng: np.random.Generator):
    """Latent hook for :func:`latentbo.vae.loss_and_grads` with triplets drawn now."""
    f_norm = np.asarray(f_norm, dtype=float)
    triplets = sample_triplets(f_norm, cfg, rng)

    def hook(z):
        return soft_triplet_batch(z, f_norm, triplets, cfg)

    return hook


def dml_elbo(model, X, f, cfg: DMLConfig, beta: float, noise, rng: np.random.Generator):
    """Negative ELBO plus the mean soft-triplet loss on one labelled batch.

    Values are min-max normalised over the batch.  Returns ``(loss, grads)``.
    """
    from .vae import loss_and_grads

    hook = metric_hook(normalise_values(f), cfg, rng)
    parts, grads = loss_and_grads(model, X, beta, noise, hook)
    return parts["loss"], grads
