import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentbo.dml import (
    DMLConfig,
    dml_elbo,
    hard_triplet_loss,
    metric_hook,
    normalise_values,
    sample_triplets,
    smoother,
    soft_triplet_batch,
    soft_triplet_loss,
    split_positive_negative,
    triplet_weights,
)
from latentbo.vae import TrainConfig, VAEModel, encode, loss_and_grads, retrain

CFG = DMLConfig()


def scripted_soft(zi, zj, zk, fi, fj, fk, eta, nu):
    dp = math.sqrt(sum((a - b) ** 2 for a, b in zip(zi, zj)))
    dn = math.sqrt(sum((a - b) ** 2 for a, b in zip(zi, zk)))
    wij = math.tanh((eta - abs(fi - fj)) / (2 * nu)) / math.tanh(eta / (2 * nu))
    wik = math.tanh((abs(fi - fk) - eta) / (2 * nu)) / math.tanh((1 - eta) / (2 * nu))
    return math.log(1 + math.exp(dp - dn)) * wij * wik


def test_config_validation():
    for bad in (dict(eta=0.0), dict(eta=1.0), dict(nu=0.0), dict(rho=-1.0), dict(triplets_per_batch=-1)):
        with pytest.raises(ValueError):
            DMLConfig(**bad)


def test_split_examples():
    pos, neg = split_positive_negative([0.0, 0.005, 0.5], 0, 0.01)
    assert list(pos) == [1] and list(neg) == [2]
    pos, neg = split_positive_negative([0.3] * 4, 2, 0.01)
    assert list(pos) == [0, 1, 3] and len(neg) == 0
    pos, neg = split_positive_negative([0.0, 0.4, 1.0], 1, 2.0)
    assert len(neg) == 0 and 1 not in pos


def test_hard_loss_examples():
    assert hard_triplet_loss([0, 0], [1, 0], [0, 0.5], 0.1) == pytest.approx(0.6, abs=1e-15)
    assert hard_triplet_loss([0, 0], [1, 1], [1, 1], 0.3) == pytest.approx(0.3, abs=1e-15)
    assert hard_triplet_loss([0, 0], [0.1, 0], [3, 0], 0.1) == 0.0


def test_smoother():
    assert smoother(0.0, 0.2) == 0.0
    assert smoother(0.2, 0.2) == pytest.approx(math.tanh(0.5), abs=1e-15)
    assert smoother(0.05, 1e-4) == pytest.approx(1.0, abs=1e-12)


def test_soft_loss_ln2_case():
    z = [0.0, 0.0]
    loss = soft_triplet_loss(z, [1.0, 0.0], [0.0, 1.0], 0.0, 0.0, 1.0, CFG)
    assert abs(loss - math.log(2)) < 1e-12


def test_soft_loss_matches_scripted():
    rng = np.random.default_rng(0)
    for _ in range(20):
        zi, zj, zk = rng.normal(size=(3, 3))
        fi = rng.uniform(0.3, 0.7)
        fj = fi + rng.uniform(-0.009, 0.009)
        fk = fi + rng.choice([-1, 1]) * rng.uniform(0.02, 0.29)
        got = soft_triplet_loss(zi, zj, zk, fi, fj, fk, CFG)
        ref = scripted_soft(zi, zj, zk, fi, fj, fk, CFG.eta, CFG.nu)
        assert abs(got - ref) < 1e-12


def test_indicator_violation_is_zero():
    z = np.zeros(2)
    assert soft_triplet_loss(z, z + 1, z - 1, 0.0, 0.02, 1.0, CFG) == 0.0
    assert soft_triplet_loss(z, z + 1, z - 1, 0.0, 0.0, 0.005, CFG) == 0.0


def test_continuity_at_eta():
    zi, zj, zk = np.zeros(2), np.array([2.0, 0.0]), np.array([0.1, 0.0])
    eta = CFG.eta
    above = soft_triplet_loss(zi, zj, zk, 0.0, 0.0, eta + 1e-6, CFG)
    below = soft_triplet_loss(zi, zj, zk, 0.0, 0.0, eta - 1e-6, CFG)
    assert above < 1e-4 and below == 0.0
    raw = soft_triplet_loss(zi, zj, zk, 0.0, 0.0, eta + 1e-6, CFG, weighted=False)
    assert raw > 1.0  # the unweighted loss jumps


def test_weights_clipped():
    w_ij, w_ik = triplet_weights(0.0, 0.5, 0.001, CFG)
    assert w_ij == 0.0 and w_ik == 0.0
    w_ij, w_ik = triplet_weights(0.0, 0.0, 1.0, CFG)
    assert w_ij == pytest.approx(1.0) and w_ik == pytest.approx(1.0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-20, 20), min_size=6, max_size=6),
    st.floats(0.0, 0.004),
    st.floats(0.1, 0.9),
)
def test_soft_vs_hard_bounds(coords, gap_pos, gap_neg):
    cfg = DMLConfig(nu=1e-4)
    zi, zj, zk = np.array(coords).reshape(3, 2)
    soft = soft_triplet_loss(zi, zj, zk, 0.0, gap_pos, gap_neg, cfg)
    hard = hard_triplet_loss(zi, zj, zk, rho=0.0)
    a = np.linalg.norm(zi - zj) - np.linalg.norm(zi - zk)
    assert soft > 0
    # supremum ln 2 is attained exactly at d+ = d-
    assert abs(soft - hard) <= math.log(2) + 1e-15
    if abs(a) > 10:
        assert abs(soft - hard) < 1e-3


def test_soft_increasing_in_positive_distance():
    zi, zk = np.zeros(2), np.array([1.0, 0.0])
    vals = [soft_triplet_loss(zi, np.array([0.0, r]), zk, 0.5, 0.5, 0.9, CFG) for r in np.linspace(0, 5, 30)]
    assert np.all(np.diff(vals) > 0)


def test_normalise_values():
    assert np.array_equal(normalise_values([2.0, 4.0, 3.0]), [0.0, 1.0, 0.5])
    assert np.array_equal(normalise_values([7.0, 7.0]), [0.0, 0.0])


def test_sample_triplets_admissible():
    f = np.array([0.0, 0.001, 0.5, 0.502, 1.0])
    tri = sample_triplets(f, CFG, np.random.default_rng(0))
    assert tri.shape == (64, 3)
    for b, p, n in tri:
        assert abs(f[b] - f[p]) < CFG.eta <= abs(f[b] - f[n]) and len({b, p, n}) == 3
    assert len(sample_triplets(np.zeros(5), CFG, np.random.default_rng(0))) == 0
    assert len(sample_triplets(f, DMLConfig(triplets_per_batch=0), np.random.default_rng(0))) == 0


def test_batch_gradient_fd():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(6, 2))
    f = np.array([0.0, 0.004, 0.3, 0.305, 0.9, 1.0])
    cfg = DMLConfig(nu=0.05)
    tri = sample_triplets(f, cfg, rng)
    _, g = soft_triplet_batch(z, f, tri, cfg)
    h = 1e-6
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        fd = (soft_triplet_batch(zp, f, tri, cfg)[0] - soft_triplet_batch(zm, f, tri, cfg)[0]) / (2 * h)
        assert g[idx] == pytest.approx(fd, rel=1e-3, abs=1e-7)


def _tiny():
    return VAEModel.create([4, 5, 2], [2, 5, 4], seed=2)


def test_metric_term_gradient_through_vae_fd():
    m = _tiny()
    X = np.random.default_rng(0).normal(size=(5, 4))
    f = np.array([0.0, 0.003, 0.5, 0.505, 1.0])
    noise = np.random.default_rng(1).normal(size=(5, 2))
    hook = metric_hook(f, DMLConfig(nu=0.1), np.random.default_rng(2))
    _, grads = loss_and_grads(m, X, 1.0, noise, hook)
    _, plain = loss_and_grads(m, X, 1.0, noise)
    params = m.params()
    h = 1e-6
    for pi in (0, 1):  # encoder weights and biases carry the metric gradient
        P = params[pi]
        for idx in list(np.ndindex(P.shape))[:12]:
            old = P[idx]
            diffs = []
            for sgn in (1, -1):
                P[idx] = old + sgn * h
                m.set_params(params)
                full = loss_and_grads(m, X, 1.0, noise, hook)[0]["loss"]
                base = loss_and_grads(m, X, 1.0, noise)[0]["loss"]
                diffs.append(full - base)
            P[idx] = old
            m.set_params(params)
            fd = (diffs[0] - diffs[1]) / (2 * h)
            an = grads[pi][idx] - plain[pi][idx]
            assert abs(an - fd) <= 1e-3 * max(abs(fd), abs(an)) + 1e-7


def test_dml_elbo_reduces_to_plain():
    m = _tiny()
    X = np.random.default_rng(0).normal(size=(4, 4))
    noise = np.random.default_rng(1).normal(size=(4, 2))
    plain = loss_and_grads(m, X, 1.0, noise)[0]["loss"]
    same, _ = dml_elbo(m, X, np.full(4, 2.0), CFG, 1.0, noise, np.random.default_rng(0))
    assert same == plain
    none, _ = dml_elbo(m, X, np.arange(4.0), DMLConfig(triplets_per_batch=0), 1.0, noise, np.random.default_rng(0))
    assert none == plain
    more, _ = dml_elbo(m, X, np.array([0.0, 0.001, 0.8, 1.0]), CFG, 1.0, noise, np.random.default_rng(0))
    assert more > plain


def test_clustering_smoke():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (120, 4))
    X[:, 2:] = X[:, :2] * 0.5  # two redundant coordinates
    f = (X[:, :2] ** 2).sum(1)
    fn = normalise_values(f)
    m = VAEModel.create([4, 16, 2], [2, 16, 4], seed=0)
    cfg = DMLConfig(eta=0.1, nu=0.2, triplets_per_batch=256)
    m = retrain(m, X, TrainConfig(epochs=200, batch=120, lr=5e-3, seed=0), f=f, dml=cfg)
    mu, _ = encode(m, X)
    D = np.linalg.norm(mu[:, None] - mu[None], axis=-1)
    same = np.abs(fn[:, None] - fn[None]) < cfg.eta
    off = ~np.eye(len(X), dtype=bool)
    assert D[same & off].mean() < D[~same].mean()
