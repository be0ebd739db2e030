"""Categorical pattern mapping (SmileGAN-style, shallow).

K affine mapping functions turn control profiles into pseudo-patients;
a least-squares adversarial game matches them to the patient
distribution while an inverse softmax network recovers which mapping
produced a profile, giving patient cluster probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .common import (
    SgdMomentum,
    TrainConfig,
    check_finite,
    disc_ls_grads,
    disc_ls_loss,
    gen_adv_terms,
    grad_check_params,
    init_disc,
    project_frobenius,
)


@dataclass
class SmileModel:
    gen: dict  # A (K,d,d), c (K,d)
    inv: dict  # V (K,d), q (K,)
    disc: dict
    l_bound: float

    @property
    def K(self) -> int:
        return self.gen["A"].shape[0]

    @property
    def n_vars(self) -> int:
        return self.gen["A"].shape[1]

    def map(self, X, k) -> np.ndarray:
        """Apply mapping k (scalar or per-row array) to control rows."""
        X = np.asarray(X, dtype=np.float64)
        k = np.broadcast_to(np.asarray(k), (X.shape[0],))
        Y = X + np.einsum("bde,be->bd", self.gen["A"][k], X) + self.gen["c"][k]
        return Y


@dataclass
class SmileBatch:
    """One training minibatch with its sampled mapping indices frozen in."""

    Xc: np.ndarray
    Xp: np.ndarray
    k_idx: np.ndarray


def default_config(**overrides) -> TrainConfig:
    """Training defaults tuned for the categorical model.

    Gentle generator steps preserve the warm-started mapping offsets.
    """
    base = dict(learning_rate=0.01, n_steps=4000)
    base.update(overrides)
    return TrainConfig(**base)


def init_smile(d: int, K: int, cfg: TrainConfig, rng) -> SmileModel:
    scale = 0.01 / np.sqrt(d)
    gen = {
        "A": rng.normal(0.0, scale, size=(K, d, d)),
        "c": rng.normal(0.0, 0.01, size=(K, d)),
    }
    inv = {
        "V": rng.normal(0.0, 1.0 / np.sqrt(d), size=(K, d)),
        "q": np.zeros(K),
    }
    return SmileModel(gen, inv, init_disc(d, cfg.disc_hidden, rng), cfg.l_bound)


def _fakes(model: SmileModel, batch: SmileBatch) -> np.ndarray:
    return model.map(batch.Xc, batch.k_idx)


def _softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


def smile_gen_loss(model: SmileModel, batch: SmileBatch, cfg: TrainConfig):
    """Total generator-side loss and its components."""
    Y = _fakes(model, batch)
    B = Y.shape[0]
    adv, _ = gen_adv_terms(model.disc, Y)
    diff = Y - batch.Xc
    change = float(np.abs(diff).sum() / B)
    sparse = float(np.abs(model.gen["A"]).sum())
    P = _softmax(Y @ model.inv["V"].T + model.inv["q"])
    cluster = float(-np.log(P[np.arange(B), batch.k_idx] + 1e-300).mean())
    total = (
        adv
        + cfg.lam_change * change
        + cfg.lam_sparse * sparse
        + cfg.lam_cluster * cluster
    )
    return total, {"adv": adv, "change": change, "sparse": sparse, "cluster": cluster}


def smile_gen_grads(model: SmileModel, batch: SmileBatch, cfg: TrainConfig) -> dict:
    """Analytic gradients of the generator loss for A, c, V, q."""
    Y = _fakes(model, batch)
    B, d = Y.shape
    K = model.K
    _, dY = gen_adv_terms(model.disc, Y)

    diff = Y - batch.Xc
    dY = dY + (cfg.lam_change / B) * np.sign(diff)

    P = _softmax(Y @ model.inv["V"].T + model.inv["q"])
    dlogits = P.copy()
    dlogits[np.arange(B), batch.k_idx] -= 1.0
    dlogits *= cfg.lam_cluster / B
    dY = dY + dlogits @ model.inv["V"]

    grads = {
        "A": cfg.lam_sparse * np.sign(model.gen["A"]),
        "c": np.zeros_like(model.gen["c"]),
        "V": dlogits.T @ Y,
        "q": dlogits.sum(axis=0),
    }
    for k in range(K):
        mask = batch.k_idx == k
        if mask.any():
            grads["A"][k] += dY[mask].T @ batch.Xc[mask]
            grads["c"][k] += dY[mask].sum(axis=0)
    return grads


def smile_disc_loss(model: SmileModel, batch: SmileBatch) -> float:
    return disc_ls_loss(model.disc, batch.Xp, [_fakes(model, batch)])


def smile_disc_grads(model: SmileModel, batch: SmileBatch) -> dict:
    return disc_ls_grads(model.disc, batch.Xp, [_fakes(model, batch)])


def sample_batch(Zc, Zp, K, cfg: TrainConfig, rng) -> SmileBatch:
    ic = rng.integers(Zc.shape[0], size=cfg.batch_size)
    ip = rng.integers(Zp.shape[0], size=cfg.batch_size)
    k = rng.integers(K, size=cfg.batch_size)
    return SmileBatch(Zc[ic], Zp[ip], k)


def fit_smile(Zc, Zp, K: int, cfg: TrainConfig) -> tuple[SmileModel, list[dict]]:
    """Adversarial training; returns the model and its training curve."""
    cfg.validate()
    Zc = np.asarray(Zc, dtype=np.float64)
    Zp = np.asarray(Zp, dtype=np.float64)
    if K < 2:
        raise ValueError("K must be >= 2")
    if Zc.shape[1] != Zp.shape[1]:
        raise ValueError("control and patient matrices must share columns")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    model = init_smile(Zc.shape[1], K, cfg, rng)
    if cfg.warm_start:
        # unsupervised warm start: seed the mapping offsets at the
        # k-means centroids of the patient cloud so training starts
        # mode-covering
        from .. import evalharness

        km_labels = evalharness.kmeans(Zp, K, cfg.seed)
        model.gen["c"] = np.vstack(
            [Zp[km_labels == k].mean(axis=0) for k in range(K)]
        )
    opt_g = SgdMomentum(
        {**model.gen, **model.inv}, cfg.learning_rate, cfg.momentum, cfg.grad_clip
    )
    opt_d = SgdMomentum(model.disc, cfg.disc_lr, cfg.momentum, cfg.grad_clip)
    curve = []
    for step in range(cfg.n_steps):
        batch = sample_batch(Zc, Zp, K, cfg, rng)
        d_loss = smile_disc_loss(model, batch)
        check_finite(d_loss, step)
        opt_d.step(smile_disc_grads(model, batch))

        batch = sample_batch(Zc, Zp, K, cfg, rng)
        g_loss, parts = smile_gen_loss(model, batch, cfg)
        check_finite(g_loss, step)
        opt_g.step(smile_gen_grads(model, batch, cfg))
        project_frobenius(model.gen["A"], model.l_bound)
        if step % 50 == 0 or step == cfg.n_steps - 1:
            curve.append(
                {
                    "step": step,
                    "loss_total": g_loss,
                    "loss_adv": parts["adv"],
                    "loss_change": parts["change"],
                    "loss_cluster": parts["cluster"],
                    "loss_disc": d_loss,
                }
            )
    return model, curve


def smile_assign(model: SmileModel, Zp) -> tuple[np.ndarray, np.ndarray]:
    """Cluster probabilities and hard labels (1..K) for patient rows."""
    Zp = np.asarray(Zp, dtype=np.float64)
    P = _softmax(Zp @ model.inv["V"].T + model.inv["q"])
    return P, P.argmax(axis=1).astype(np.int64) + 1


def smile_grad_check(model: SmileModel, batch: SmileBatch, cfg: TrainConfig, eps: float) -> float:
    """Max relative analytic-vs-finite-difference error over all blocks.

    Entries of A within a few eps of the L1 kink at zero are nudged off
    it first; central differences are only meaningful where the loss is
    differentiable.
    """
    A = model.gen["A"]
    near = np.abs(A) < 10.0 * eps
    A[near] = np.where(A[near] >= 0.0, 10.0 * eps, -10.0 * eps)
    gen_params = {**model.gen, **model.inv}
    g = smile_gen_grads(model, batch, cfg)
    err = grad_check_params(
        lambda: smile_gen_loss(model, batch, cfg)[0], g, gen_params, eps
    )
    gd = smile_disc_grads(model, batch)
    err = max(
        err,
        grad_check_params(lambda: smile_disc_loss(model, batch), gd, model.disc, eps),
    )
    return err
