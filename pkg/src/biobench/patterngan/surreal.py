"""Continuous pattern decomposition (SurrealGAN-style, shallow).

M pattern maps g_m(x) = W_m x + b_m compose as f(x, r) = x + sum_m
r_m g_m(x); adversarial training against patients with monotonicity,
orthogonality, sparsity and inverse-consistency terms.  The inverse
network's sigmoid outputs are the per-patient R-indices.
"""

from __future__ import annotations

from dataclasses import dataclass

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
    sigmoid,
)

MONO_DELTA = 0.1


@dataclass
class SurrealModel:
    gen: dict  # W (M,d,d), b (M,d)
    inv: dict  # Ur (M,d), ar (M,), Ux (d,d), ax (d,)
    disc: dict
    l_bound: float

    @property
    def M(self) -> int:
        return self.gen["W"].shape[0]

    @property
    def n_vars(self) -> int:
        return self.gen["W"].shape[1]

    def maps(self, X) -> np.ndarray:
        """g_m(x) for every row and pattern: (B, M, d)."""
        X = np.asarray(X, dtype=np.float64)
        return np.einsum("mde,be->bmd", self.gen["W"], X) + self.gen["b"]

    def transform(self, X, r) -> np.ndarray:
        """f(x, r) = x + sum_m r_m g_m(x)."""
        X = np.asarray(X, dtype=np.float64)
        return X + np.einsum("bm,bmd->bd", np.asarray(r, dtype=np.float64), self.maps(X))


@dataclass
class SurrealBatch:
    """Minibatch with both sampled R-vectors (double sampling) frozen in."""

    Xc: np.ndarray
    Xp: np.ndarray
    r: np.ndarray
    r2: np.ndarray


def default_config(**overrides) -> TrainConfig:
    """Training defaults tuned for the continuous model.

    Gentler generator steps preserve the warm-started pattern offsets;
    the heavier inverse-consistency weight keeps R-indices decodable.
    """
    base = dict(learning_rate=0.005, n_steps=3000, lam_recon=3.0, lam_mono=3.0)
    base.update(overrides)
    return TrainConfig(**base)


def init_surreal(d: int, M: int, cfg: TrainConfig, rng) -> SurrealModel:
    scale = 0.01 / np.sqrt(d)
    gen = {
        "W": rng.normal(0.0, scale, size=(M, d, d)),
        "b": rng.normal(0.0, 0.01, size=(M, d)),
    }
    inv = {
        "Ur": rng.normal(0.0, 1.0 / np.sqrt(d), size=(M, d)),
        "ar": np.zeros(M),
        "Ux": np.eye(d) + rng.normal(0.0, scale, size=(d, d)),
        "ax": np.zeros(d),
    }
    return SurrealModel(gen, inv, init_disc(d, cfg.disc_hidden, rng), cfg.l_bound)


def r_indices(model: SurrealModel, Zp) -> np.ndarray:
    """Inverse-network R-index vectors, clamped to [0,1]^M."""
    Zp = np.asarray(Zp, dtype=np.float64)
    return np.clip(sigmoid(Zp @ model.inv["Ur"].T + model.inv["ar"]), 0.0, 1.0)


def surreal_gen_loss(model: SurrealModel, batch: SurrealBatch, cfg: TrainConfig):
    """Total generator-side loss and its components."""
    X = batch.Xc
    B = X.shape[0]
    G = model.maps(X)
    U = np.einsum("bm,bmd->bd", batch.r, G)
    Y = X + U
    Y2 = X + np.einsum("bm,bmd->bd", batch.r2, G)

    adv1, _ = gen_adv_terms(model.disc, Y)
    adv2, _ = gen_adv_terms(model.disc, Y2)
    adv = 0.5 * (adv1 + adv2)

    un = np.linalg.norm(U, axis=1)
    vn = np.linalg.norm(U[:, None, :] + MONO_DELTA * G, axis=2)
    mono = float(np.maximum(un[:, None] - vn, 0.0).sum() / B)

    gbar = G.mean(axis=0)
    gn = np.linalg.norm(gbar, axis=1)
    cos = (gbar @ gbar.T) / np.maximum(np.outer(gn, gn), 1e-300)
    off = ~np.eye(model.M, dtype=bool)
    orth = float((cos[off] ** 2).sum())

    sparse = float(np.abs(model.gen["W"]).sum())

    # per-coordinate normalization keeps recon comparable to the other
    # terms regardless of dimensionality
    rhat = sigmoid(Y @ model.inv["Ur"].T + model.inv["ar"])
    xhat = Y @ model.inv["Ux"].T + model.inv["ax"]
    recon = float(
        ((rhat - batch.r) ** 2).sum() / (B * model.M)
        + ((xhat - X) ** 2).sum() / (B * X.shape[1])
    )

    total = (
        adv
        + cfg.lam_mono * mono
        + cfg.lam_orth * orth
        + cfg.lam_sparse * sparse
        + cfg.lam_recon * recon
    )
    return total, {
        "adv": adv,
        "mono": mono,
        "orth": orth,
        "sparse": sparse,
        "recon": recon,
    }


def surreal_gen_grads(model: SurrealModel, batch: SurrealBatch, cfg: TrainConfig) -> dict:
    """Analytic gradients of the generator loss for W, b, Ur, ar, Ux, ax."""
    X = batch.Xc
    B, d = X.shape
    M = model.M
    G = model.maps(X)
    U = np.einsum("bm,bmd->bd", batch.r, G)
    Y = X + U
    Y2 = X + np.einsum("bm,bmd->bd", batch.r2, G)

    _, dY = gen_adv_terms(model.disc, Y)
    dY = 0.5 * dY
    _, dY2 = gen_adv_terms(model.disc, Y2)
    dY2 = 0.5 * dY2

    grads = {
        "W": cfg.lam_sparse * np.sign(model.gen["W"]),
        "b": np.zeros_like(model.gen["b"]),
        "Ur": np.zeros_like(model.inv["Ur"]),
        "ar": np.zeros_like(model.inv["ar"]),
        "Ux": np.zeros_like(model.inv["Ux"]),
        "ax": np.zeros_like(model.inv["ax"]),
    }

    # inverse-consistency terms flow into Y and the inverse nets
    if cfg.lam_recon > 0:
        rhat = sigmoid(Y @ model.inv["Ur"].T + model.inv["ar"])
        cr = 2.0 * cfg.lam_recon / (B * M)
        dlogit = cr * (rhat - batch.r) * rhat * (1.0 - rhat)
        grads["Ur"] += dlogit.T @ Y
        grads["ar"] += dlogit.sum(axis=0)
        dY = dY + dlogit @ model.inv["Ur"]
        ex = Y @ model.inv["Ux"].T + model.inv["ax"] - X
        cx = 2.0 * cfg.lam_recon / (B * d)
        grads["Ux"] += cx * ex.T @ Y
        grads["ax"] += cx * ex.sum(axis=0)
        dY = dY + cx * ex @ model.inv["Ux"]

    # map-space gradient accumulator
    dG = batch.r[:, :, None] * dY[:, None, :] + batch.r2[:, :, None] * dY2[:, None, :]

    if cfg.lam_mono > 0:
        un = np.linalg.norm(U, axis=1)
        V = U[:, None, :] + MONO_DELTA * G
        vn = np.linalg.norm(V, axis=2)
        active = (un[:, None] - vn > 0) & (un[:, None] > 0)
        if active.any():
            uhat = U / np.maximum(un, 1e-300)[:, None]
            vhat = V / np.maximum(vn, 1e-300)[:, :, None]
            coef = cfg.lam_mono / B
            dU = coef * (
                active.sum(axis=1)[:, None] * uhat
                - (active[:, :, None] * vhat).sum(axis=1)
            )
            dG += batch.r[:, :, None] * dU[:, None, :]
            dG -= (coef * MONO_DELTA) * active[:, :, None] * vhat

    if cfg.lam_orth > 0 and M > 1:
        gbar = G.mean(axis=0)
        gn = np.maximum(np.linalg.norm(gbar, axis=1), 1e-300)
        ghat = gbar / gn[:, None]
        cos = ghat @ ghat.T
        np.fill_diagonal(cos, 0.0)
        # d/d gbar_m of sum_{m!=m'} cos^2 = 4 sum_{m'} cos*(ghat_m' - cos*ghat_m)/gn_m
        dgbar = (4.0 * cfg.lam_orth) * (
            cos @ ghat - (cos**2).sum(axis=1)[:, None] * ghat
        ) / gn[:, None]
        dG += dgbar[None, :, :] / B

    grads["W"] += np.einsum("bmd,be->mde", dG, X)
    grads["b"] += dG.sum(axis=0)
    return grads


def surreal_disc_loss(model: SurrealModel, batch: SurrealBatch) -> float:
    Y = model.transform(batch.Xc, batch.r)
    Y2 = model.transform(batch.Xc, batch.r2)
    return disc_ls_loss(model.disc, batch.Xp, [Y, Y2])


def surreal_disc_grads(model: SurrealModel, batch: SurrealBatch) -> dict:
    Y = model.transform(batch.Xc, batch.r)
    Y2 = model.transform(batch.Xc, batch.r2)
    return disc_ls_grads(model.disc, batch.Xp, [Y, Y2])


def sample_batch(Zc, Zp, M, cfg: TrainConfig, rng) -> SurrealBatch:
    ic = rng.integers(Zc.shape[0], size=cfg.batch_size)
    ip = rng.integers(Zp.shape[0], size=cfg.batch_size)
    r = rng.uniform(size=(cfg.batch_size, M))
    r2 = rng.uniform(size=(cfg.batch_size, M))
    return SurrealBatch(Zc[ic], Zp[ip], r, r2)


def fit_surreal(Zc, Zp, M: int, cfg: TrainConfig) -> tuple[SurrealModel, list[dict]]:
    """Adversarial training with double sampling; returns model and curve."""
    cfg.validate()
    Zc = np.asarray(Zc, dtype=np.float64)
    Zp = np.asarray(Zp, dtype=np.float64)
    if M < 1:
        raise ValueError("M must be >= 1")
    if Zc.shape[1] != Zp.shape[1]:
        raise ValueError("control and patient matrices must share columns")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    model = init_surreal(Zc.shape[1], M, cfg, rng)
    if cfg.warm_start:
        # unsupervised warm start: seed the pattern offsets at the
        # k-means centroids of the patient cloud so training starts
        # mode-covering
        from .. import evalharness

        km_labels = evalharness.kmeans(Zp, M, cfg.seed)
        model.gen["b"] = np.vstack(
            [Zp[km_labels == m].mean(axis=0) for m in range(M)]
        )
    opt_g = SgdMomentum(
        {**model.gen, **model.inv}, cfg.learning_rate, cfg.momentum, cfg.grad_clip
    )
    opt_d = SgdMomentum(model.disc, cfg.disc_lr, cfg.momentum, cfg.grad_clip)
    curve = []
    for step in range(cfg.n_steps):
        batch = sample_batch(Zc, Zp, M, cfg, rng)
        d_loss = surreal_disc_loss(model, batch)
        check_finite(d_loss, step)
        opt_d.step(surreal_disc_grads(model, batch))

        batch = sample_batch(Zc, Zp, M, cfg, rng)
        g_loss, parts = surreal_gen_loss(model, batch, cfg)
        check_finite(g_loss, step)
        opt_g.step(surreal_gen_grads(model, batch, cfg))
        project_frobenius(model.gen["W"], model.l_bound)
        if step % 50 == 0 or step == cfg.n_steps - 1:
            curve.append(
                {
                    "step": step,
                    "loss_total": g_loss,
                    "loss_adv": parts["adv"],
                    "loss_mono": parts["mono"],
                    "loss_orth": parts["orth"],
                    "loss_recon": parts["recon"],
                    "loss_disc": d_loss,
                }
            )
    return model, curve


def surreal_assign(model: SurrealModel, Zp) -> np.ndarray:
    """Hard labels 1..M by argmax R-index (smallest index on ties)."""
    return r_indices(model, Zp).argmax(axis=1).astype(np.int64) + 1


def monotonicity_rate(model: SurrealModel, Zc, n_samples: int = 100, seed: int = 0) -> float:
    """Fraction of sampled (x, r, m) with non-decreasing deviation norm."""
    Zc = np.asarray(Zc, dtype=np.float64)
    rng = np.random.default_rng(seed)
    idx = rng.integers(Zc.shape[0], size=n_samples)
    r = rng.uniform(size=(n_samples, model.M))
    m = rng.integers(model.M, size=n_samples)
    X = Zc[idx]
    base = np.linalg.norm(model.transform(X, r) - X, axis=1)
    rp = r.copy()
    rp[np.arange(n_samples), m] += MONO_DELTA
    bumped = np.linalg.norm(model.transform(X, rp) - X, axis=1)
    return float((bumped >= base).mean())


def surreal_grad_check(model: SurrealModel, batch: SurrealBatch, cfg: TrainConfig, eps: float) -> float:
    """Max relative analytic-vs-finite-difference error over all blocks.

    W entries within a few eps of the L1 kink at zero are nudged off it
    first, as are monotonicity hinges sitting exactly on their kink.
    """
    W = model.gen["W"]
    near = np.abs(W) < 10.0 * eps
    W[near] = np.where(W[near] >= 0.0, 10.0 * eps, -10.0 * eps)
    gen_params = {**model.gen, **model.inv}
    g = surreal_gen_grads(model, batch, cfg)
    err = grad_check_params(
        lambda: surreal_gen_loss(model, batch, cfg)[0], g, gen_params, eps
    )
    gd = surreal_disc_grads(model, batch)
    err = max(
        err,
        grad_check_params(lambda: surreal_disc_loss(model, batch), gd, model.disc, eps),
    )
    return err
