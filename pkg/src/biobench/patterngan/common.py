"""Shared pieces of the shallow adversarial pattern models.

Small-MLP discriminator, SGD-with-momentum updates, Frobenius-ball
projection, and the finite-difference gradient checker.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    disc_learning_rate: float | None = None
    batch_size: int = 64
    n_steps: int = 3000
    lam_change: float = 0.003
    lam_cluster: float = 1.0
    lam_sparse: float = 1e-4
    lam_mono: float = 1.0
    lam_orth: float = 0.2
    lam_recon: float = 1.0
    l_bound: float = 1.0
    disc_hidden: int = 32
    momentum: float = 0.9
    grad_clip: float = 5.0  # per-block gradient norm cap, 0 disables
    warm_start: bool = True  # seed mapping offsets from patient k-means
    seed: int = 0

    def validate(self):
        lams = (
            self.lam_change,
            self.lam_cluster,
            self.lam_sparse,
            self.lam_mono,
            self.lam_orth,
            self.lam_recon,
        )
        if any(l < 0 for l in lams):
            raise ValueError("loss weights must be nonnegative")
        if self.n_steps < 1 or self.batch_size < 1:
            raise ValueError("n_steps and batch_size must be >= 1")
        if self.learning_rate <= 0 or self.disc_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.l_bound <= 0 or self.grad_clip < 0:
            raise ValueError("l_bound must be positive and grad_clip nonnegative")

    @property
    def disc_lr(self) -> float:
        # slower critic keeps the adversarial signal alive for the
        # mapping functions
        return (
            self.disc_learning_rate
            if self.disc_learning_rate is not None
            else self.learning_rate / 5.0
        )


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def init_disc(d: int, h: int, rng) -> dict:
    scale = 1.0 / np.sqrt(d)
    return {
        "W1": rng.normal(0.0, scale, size=(h, d)),
        "b1": np.zeros(h),
        "u": rng.normal(0.0, 1.0 / np.sqrt(h), size=h),
        "b0": np.zeros(()),
    }


def disc_forward(disc: dict, X):
    """Linear output head (least-squares GAN convention, no saturation)."""
    H = np.tanh(X @ disc["W1"].T + disc["b1"])
    score = H @ disc["u"] + disc["b0"]
    return score, H


def disc_input_grad(disc: dict, X, dlogit):
    """d(loss)/dX given d(loss)/dlogit, recomputing the hidden layer."""
    H = np.tanh(X @ disc["W1"].T + disc["b1"])
    return (dlogit[:, None] * (1.0 - H * H) * disc["u"]) @ disc["W1"]


def _disc_backprop(disc, X, dlogit, grads):
    H = np.tanh(X @ disc["W1"].T + disc["b1"])
    dh = dlogit[:, None] * disc["u"] * (1.0 - H * H)
    grads["W1"] += dh.T @ X
    grads["b1"] += dh.sum(axis=0)
    grads["u"] += H.T @ dlogit
    grads["b0"] += dlogit.sum()


def disc_ls_loss(disc: dict, reals, fake_batches) -> float:
    """Least-squares adversarial loss: reals toward 1, fakes toward 0."""
    Dr, _ = disc_forward(disc, reals)
    loss = float(((Dr - 1.0) ** 2).mean())
    for F in fake_batches:
        Df, _ = disc_forward(disc, F)
        loss += float((Df**2).mean()) / len(fake_batches)
    return loss


def disc_ls_grads(disc: dict, reals, fake_batches) -> dict:
    grads = {k: np.zeros_like(v) for k, v in disc.items()}
    Dr, _ = disc_forward(disc, reals)
    dscore = 2.0 * (Dr - 1.0) / reals.shape[0]
    _disc_backprop(disc, reals, dscore, grads)
    for F in fake_batches:
        Df, _ = disc_forward(disc, F)
        dscore = 2.0 * Df / (F.shape[0] * len(fake_batches))
        _disc_backprop(disc, F, dscore, grads)
    return grads


def gen_adv_terms(disc: dict, F):
    """Generator-side LS loss on one fake batch and its d(loss)/dF."""
    Df, _ = disc_forward(disc, F)
    loss = float(((Df - 1.0) ** 2).mean())
    dscore = 2.0 * (Df - 1.0) / F.shape[0]
    return loss, disc_input_grad(disc, F, dscore)


class SgdMomentum:
    """Plain SGD with momentum over a dict of parameter arrays."""

    def __init__(self, params: dict, lr: float, momentum: float = 0.9, clip: float = 0.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.clip = clip
        self.vel = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        for k, g in grads.items():
            if self.clip > 0:
                n = float(np.linalg.norm(g))
                if n > self.clip:
                    g = g * (self.clip / n)
            v = self.vel[k]
            v *= self.momentum
            v -= self.lr * g
            self.params[k] += v


def project_frobenius(A: np.ndarray, radius: float) -> None:
    """Scale matrices (last two axes) back onto the Frobenius ball, in place."""
    flat = A.reshape(A.shape[0], -1) if A.ndim == 3 else A.reshape(1, -1)
    norms = np.linalg.norm(flat, axis=1)
    for i, n in enumerate(norms):
        if n > radius:
            flat[i] *= radius / n


def check_finite(loss: float, step: int) -> None:
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss at step {step}")


def grad_check_params(loss_fn, grads: dict, params: dict, eps: float) -> float:
    """Max relative error of analytic grads vs central finite differences."""
    worst = 0.0
    for name, p in params.items():
        g = np.atleast_1d(np.asarray(grads[name], dtype=np.float64))
        flat = p.reshape(-1) if p.ndim else p.reshape(1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_fn()
            flat[i] = orig - eps
            lm = loss_fn()
            flat[i] = orig
            fd = (lp - lm) / (2.0 * eps)
            a, b = float(gflat[i]), float(fd)
            denom = max(abs(a), abs(b))
            err = abs(a - b) if denom < 1e-6 else abs(a - b) / denom
            worst = max(worst, err)
    return worst
