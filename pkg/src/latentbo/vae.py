"""Variational autoencoder on top of :mod:`latentbo.nn`.

The encoder emits ``[mu, log sigma^2]`` from a single linear output layer;
the decoder returns the Gaussian mean (observation variance fixed to 1).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from .nn import MLP, AdamState, adam_step, backward, forward, load_mlps, save_mlps

__all__ = [
    "VAEModel",
    "BetaSchedule",
    "TrainConfig",
    "VAE_PRESETS",
    "PRETRAIN_PRESETS",
    "RETRAIN_PRESETS",
    "encode",
    "decode",
    "reparameterize",
    "kl_divergence",
    "elbo",
    "loss_and_grads",
    "train",
    "retrain",
    "generate_training_data",
    "save_vae",
    "load_vae",
]

# name -> (encoder widths, decoder widths)
VAE_PRESETS = {
    "vae-4.1": ([10, 5], [5, 10]),
    "vae-4.2": ([10, 5, 2], [2, 5, 10]),
    "vae-4.3": ([100, 30, 2], [2, 30, 100]),
    "vae-4.4": ([100, 32, 10], [10, 32, 100]),
    "vae-4.5": ([100, 50], [50, 100]),
    "vae-4.6": ([100, 25, 5], [5, 25, 100]),
}


@dataclass(frozen=True)
class BetaSchedule:
    """Raise beta by ``beta_a`` every ``beta_s`` epochs from ``beta_i`` up to ``beta_f``."""

    beta_i: float = 0.0
    beta_f: float = 1.0
    beta_s: int = 10
    beta_a: float = 0.1

    def __call__(self, epoch: int) -> float:
        beta = self.beta_i + self.beta_a * (epoch // self.beta_s)
        # round away accumulated float error from the 0.1 increments
        return float(min(max(round(beta, 12), self.beta_i), self.beta_f))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch: int = 256
    lr: float = 1e-3
    seed: int = 0
    schedule: Optional[BetaSchedule] = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1 or self.lr < 0:
            raise ValueError("invalid training configuration")

    def beta(self, epoch: int) -> float:
        return 1.0 if self.schedule is None else self.schedule(epoch)


_PAPER_SCHEDULE = BetaSchedule(0.0, 1.0, 10, 0.1)
# Pre-training (epochs, batch, unlabelled pool size M) per architecture family.
PRETRAIN_PRESETS = {
    "vae-4.1": dict(epochs=150, batch=256, lr=1e-3, schedule=_PAPER_SCHEDULE, M=10000),
    "vae-4.2": dict(epochs=150, batch=256, lr=1e-3, schedule=_PAPER_SCHEDULE, M=10000),
    "vae-4.3": dict(epochs=300, batch=1024, lr=1e-3, schedule=_PAPER_SCHEDULE, M=50000),
    "vae-4.4": dict(epochs=300, batch=1024, lr=1e-3, schedule=_PAPER_SCHEDULE, M=50000),
    "vae-4.5": dict(epochs=300, batch=1024, lr=1e-3, schedule=_PAPER_SCHEDULE, M=50000),
    "vae-4.6": dict(epochs=300, batch=1024, lr=1e-3, schedule=_PAPER_SCHEDULE, M=50000),
}
RETRAIN_PRESETS = {
    "vae-4.1": dict(epochs=2, batch=128, lr=1e-3),
    "vae-4.2": dict(epochs=2, batch=128, lr=1e-3),
    "vae-4.3": dict(epochs=2, batch=256, lr=1e-3),
    "vae-4.4": dict(epochs=2, batch=256, lr=1e-3),
    "vae-4.5": dict(epochs=2, batch=256, lr=1e-3),
    "vae-4.6": dict(epochs=2, batch=256, lr=1e-3),
}


class VAEModel:
    def __init__(self, encoder: MLP, decoder: MLP, stochastic_decode: bool = False):
        if encoder.n_out % 2:
            raise ValueError("encoder must output [mu, log-variance]")
        d = encoder.n_out // 2
        if decoder.n_in != d or decoder.n_out != encoder.n_in:
            raise ValueError("encoder and decoder shapes do not round-trip")
        if d >= encoder.n_in:
            raise ValueError("latent dimension must be below the ambient dimension")
        self.encoder = encoder
        self.decoder = decoder
        self.stochastic_decode = stochastic_decode
        self.loss_history: List[float] = []

    @classmethod
    def create(cls, encoder_widths: Sequence[int], decoder_widths: Sequence[int], seed: int = 0, **kw) -> "VAEModel":
        """Build from layer-width lists such as ``[100, 30, 2]`` / ``[2, 30, 100]``."""
        enc_widths = list(encoder_widths[:-1]) + [2 * encoder_widths[-1]]
        ss = np.random.SeedSequence(seed)
        s_enc, s_dec = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        return cls(MLP.init(enc_widths, s_enc), MLP.init(list(decoder_widths), s_dec), **kw)

    @classmethod
    def from_preset(cls, name: str, seed: int = 0, **kw) -> "VAEModel":
        enc, dec = VAE_PRESETS[name.lower()]
        return cls.create(enc, dec, seed, **kw)

    @property
    def D(self) -> int:
        return self.encoder.n_in

    @property
    def d(self) -> int:
        return self.encoder.n_out // 2

    def copy(self) -> "VAEModel":
        m = VAEModel(self.encoder.copy(), self.decoder.copy(), self.stochastic_decode)
        m.loss_history = list(self.loss_history)
        return m

    def params(self):
        return self.encoder.params() + self.decoder.params()

    def set_params(self, flat):
        ne = len(self.encoder.params())
        self.encoder.set_params(flat[:ne])
        self.decoder.set_params(flat[ne:])


def encode(model: VAEModel, x):
    """Posterior mean and variance of ``q(z | x)``."""
    h = model.encoder(np.asarray(x, dtype=float))
    d = model.d
    return h[..., :d], np.exp(h[..., d:])


def reparameterize(mu, sigma2, noise):
    return np.asarray(mu) + np.sqrt(np.asarray(sigma2)) * np.asarray(noise)


def decode(model: VAEModel, z, rng: Optional[np.random.Generator] = None):
    """Decoder mean; with ``stochastic_decode`` unit-variance noise is added."""
    x = model.decoder(np.asarray(z, dtype=float))
    if model.stochastic_decode:
        rng = rng if rng is not None else np.random.default_rng()
        x = x + rng.standard_normal(x.shape)
    return x


def kl_divergence(mu, sigma2):
    """``KL(N(mu, diag sigma2) || N(0, I))`` summed over the last axis."""
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    return 0.5 * np.sum(sigma2 + mu**2 - 1.0 - np.log(sigma2), axis=-1)


# A hook receives the reparameterised latent batch and returns
# (extra loss, d extra / d z).  The DML term plugs in here.
LatentHook = Callable[[np.ndarray], tuple]


def loss_and_grads(model: VAEModel, X, beta: float, noise, hook: Optional[LatentHook] = None):
    """Batch-mean negative ELBO (plus optional hook term) and its parameter gradients.

    Returns ``(parts, grads)`` with ``parts = dict(recon, kl, extra, loss)``
    and ``grads`` flattened in ``model.params()`` order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    B = X.shape[0]
    d = model.d
    h, enc_tape = forward(model.encoder, X)
    mu, logvar = h[:, :d], h[:, d:]
    std = np.exp(0.5 * logvar)
    s2 = std * std
    z = mu + std * noise
    xh, dec_tape = forward(model.decoder, z)
    resid = xh - X
    recon = 0.5 * np.sum(resid * resid) / B
    kl = 0.5 * np.sum(s2 + mu * mu - 1.0 - logvar) / B
    extra = 0.0
    dec_grads, g_z = backward(model.decoder, dec_tape, resid / B)
    if hook is not None:
        extra, g_extra = hook(z)
        g_z = g_z + g_extra
    g_mu = g_z + beta * mu / B
    g_logvar = g_z * noise * std * 0.5 + beta * 0.5 * (s2 - 1.0) / B
    enc_grads, _ = backward(model.encoder, enc_tape, np.concatenate([g_mu, g_logvar], axis=1))
    flat = [g for pair in enc_grads for g in pair] + [g for pair in dec_grads for g in pair]
    parts = dict(recon=float(recon), kl=float(kl), extra=float(extra), loss=float(recon + beta * kl + extra))
    return parts, flat


def elbo(model: VAEModel, X, beta: float, noise):
    """Return ``(recon, kl, loss)`` for a batch with the given standard-normal noise."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mu, s2 = encode(model, X)
    xh = model.decoder(reparameterize(mu, s2, noise))
    recon = 0.5 * float(np.mean(np.sum((X - xh) ** 2, axis=1)))
    kl = float(np.mean(kl_divergence(mu, s2)))
    return recon, kl, recon + beta * kl


def _fit(model: VAEModel, X, cfg: TrainConfig, hook_factory=None) -> VAEModel:
    model = model.copy()
    if cfg.epochs == 0:
        return model
    rng = np.random.default_rng(cfg.seed)
    adam = AdamState(lr=cfg.lr)
    M = X.shape[0]
    for epoch in range(cfg.epochs):
        beta = cfg.beta(epoch)
        perm = rng.permutation(M)
        total = 0.0
        for start in range(0, M, cfg.batch):
            idx = perm[start : start + cfg.batch]
            noise = rng.standard_normal((len(idx), model.d))
            hook = hook_factory(idx, rng) if hook_factory is not None else None
            parts, grads = loss_and_grads(model, X[idx], beta, noise, hook)
            if cfg.lr > 0:
                model.set_params(adam_step(adam, model.params(), grads))
            total += parts["loss"] * len(idx)
        model.loss_history.append(total / M)
    return model


def train(model: VAEModel, data, cfg: TrainConfig) -> VAEModel:
    """Mini-batch Adam on the (beta-annealed) negative ELBO.  Returns a trained copy."""
    X = np.atleast_2d(np.asarray(data, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("no training data")
    if X.shape[1] != model.D:
        raise ValueError(f"data has {X.shape[1]} columns, model expects {model.D}")
    return _fit(model, X, cfg)


def retrain(model: VAEModel, X, cfg: TrainConfig, f=None, dml=None) -> VAEModel:
    """Warm-start retraining on the labelled inputs ``X`` (beta fixed at 1).

    With ``dml`` (a :class:`latentbo.dml.DMLConfig`) and values ``f``, the
    soft-triplet term is added to the loss.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empty labelled set")
    cfg = TrainConfig(cfg.epochs, cfg.batch, cfg.lr, cfg.seed, None)
    use_dml = dml is not None and dml.triplets_per_batch > 0
    return _fit(model, X, cfg, _triplet_hooks(f, dml) if use_dml else None)


def _triplet_hooks(f, dml):
    from .dml import metric_hook, normalise_values

    fn = normalise_values(np.asarray(f, dtype=float))

    def factory(idx, rng):
        return metric_hook(fn[idx], dml, rng)

    return factory


def generate_training_data(D: int, M: int, lower, upper, seed: int = 0, rho: float = 0.9, clip: bool = True):
    """Highly correlated Gaussian samples centred in the box.

    Covariance ``s^2 [(1 - rho) I + rho 11^T]`` with ``s`` a quarter of the
    mean side length.
    """
    if M < 1:
        raise ValueError("M must be positive")
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (D,))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (D,))
    centre = 0.5 * (lower + upper)
    s = 0.25 * float(np.mean(upper - lower))
    rng = np.random.default_rng(seed)
    common = rng.standard_normal((M, 1))
    own = rng.standard_normal((M, D))
    X = centre + s * (np.sqrt(rho) * common + np.sqrt(1.0 - rho) * own)
    return np.clip(X, lower, upper) if clip else X


def save_vae(path, model: VAEModel, **meta):
    """Write the binary checkpoint plus a JSON sidecar (``<path>.json``)."""
    path = Path(path)
    save_mlps(path, [model.encoder, model.decoder])
    info = dict(
        D=model.D,
        d=model.d,
        encoder_widths=model.encoder.widths,
        decoder_widths=model.decoder.widths,
        activation="softplus",
        **meta,
    )
    Path(str(path) + ".json").write_text(json.dumps(info, indent=2, sort_keys=True))


def load_vae(path) -> VAEModel:
    enc, dec = load_mlps(path)
    return VAEModel(enc, dec)
