"""Loss terms of the cross-modal objective, values and parameter gradients.

Every term exposes a value-only surface plus a ``*_grads`` variant used
by the trainer; gradients align with ``nets.parameters`` of each net so
the finite-difference checker can target any single net while the others
stay frozen.  Discriminator probabilities are clamped to
[1e-7, 1 - 1e-7] before logarithms, with zero gradient in the clamped
region.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import nets
from .errors import ContractError, ShapeError

PROB_EPS = 1e-7

COMPONENTS = (
    "adv_se",
    "adv_sk",
    "adv_im",
    "cyc_sk",
    "cyc_im",
    "cls_sk",
    "cls_im",
    "aenc",
)


@dataclass(frozen=True)
class LossWeights:
    """Weights of the total objective plus the row-sparsity weight."""

    adv_se: float = 1.0
    adv_sk: float = 0.5
    adv_im: float = 0.5
    cyc_sk: float = 1.0
    cyc_im: float = 1.0
    cls_sk: float = 1.0
    cls_im: float = 1.0
    aenc: float = 0.01
    l21: float = 1.0

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def l21_norm(w: np.ndarray) -> tuple[float, np.ndarray]:
    """Sum of row norms and its subgradient (zero rows get zero)."""
    w = np.asarray(w)
    norms = np.sqrt(np.square(w, dtype=np.float64).sum(axis=1))
    sub = np.zeros_like(w)
    live = norms >= 1e-12
    sub[live] = (w[live] / norms[live, None]).astype(w.dtype)
    return float(norms.sum()), sub


def _clamped_log_grad(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """log of clamped probabilities and d(log)/dp, zero where clamped."""
    clamped = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    inside = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    return np.log(clamped), np.where(inside, 1.0 / clamped, 0.0)


def disc_grads(
    disc: nets.DenseNet,
    real: np.ndarray,
    fakes: list[np.ndarray],
    real_weight: float,
) -> tuple[float, list[np.ndarray]]:
    """Discriminator loss (negated objective) and its parameter gradients."""
    total = 0.0
    acc = [np.zeros_like(p) for p in nets.parameters(disc)]
    b_real = real.shape[0]
    p, cache = nets.forward(disc, real)
    logs, dlog = _clamped_log_grad(p)
    total -= real_weight * float(logs.mean(dtype=np.float64))
    g, _ = nets.backward(disc, cache, (-real_weight / p.size) * dlog)
    for a, gi in zip(acc, g):
        a += gi
    for fake in fakes:
        if fake.shape[0] != b_real:
            raise ShapeError("real and fake batch sizes differ")
        p, cache = nets.forward(disc, fake)
        logs, dlog = _clamped_log_grad(1.0 - p)
        total -= float(logs.mean(dtype=np.float64))
        g, _ = nets.backward(disc, cache, (1.0 / p.size) * dlog)
        for a, gi in zip(acc, g):
            a += gi
    return total, acc


def adversarial_objective(
    disc: nets.DenseNet,
    real: np.ndarray,
    fakes: list[np.ndarray],
    real_weight: float,
) -> float:
    """The minimax value the discriminator maximizes."""
    p, _ = nets.forward(disc, real)
    value = real_weight * float(
        np.log(np.clip(p, PROB_EPS, 1 - PROB_EPS)).mean(dtype=np.float64)
    )
    for fake in fakes:
        p, _ = nets.forward(disc, fake)
        value += float(
            np.log(np.clip(1.0 - p, PROB_EPS, 1 - PROB_EPS)).mean(dtype=np.float64)
        )
    return value


def gen_adv_grads(
    disc: nets.DenseNet, gen: nets.DenseNet, batch: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Non-saturating generator surrogate -E[log D(G(batch))] and G grads."""
    fake, gcache = nets.forward(gen, batch)
    p, dcache = nets.forward(disc, fake)
    logs, dlog = _clamped_log_grad(p)
    value = -float(logs.mean(dtype=np.float64))
    _, dfake = nets.backward(disc, dcache, (-1.0 / p.size) * dlog)
    grads, _ = nets.backward(gen, gcache, dfake)
    return value, grads


def adversarial_loss(branch, real_batch, fake_batch, model) -> tuple[float, float]:
    """(d_loss, g_loss) for one branch; the semantic branch takes two fakes."""
    if branch == "semantic":
        disc, fakes, weight = model.d_se, list(fake_batch), 2.0
        if len(fakes) != 2:
            raise ContractError("semantic branch expects both generator outputs")
    elif branch == "sketch_feat":
        disc, fakes, weight = model.d_sk, [fake_batch], 1.0
    elif branch == "image_feat":
        disc, fakes, weight = model.d_im, [fake_batch], 1.0
    else:
        raise ContractError(f"unknown adversarial branch {branch!r}")
    d_loss = -adversarial_objective(disc, real_batch, fakes, weight)
    g_loss = 0.0
    for fake in fakes:
        p, _ = nets.forward(disc, fake)
        g_loss -= float(
            np.log(np.clip(p, PROB_EPS, 1 - PROB_EPS)).mean(dtype=np.float64)
        )
    return d_loss, g_loss


def cycle_grads(
    x: np.ndarray, s: np.ndarray, gen: nets.DenseNet, dec: nets.DenseNet
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Both round-trip L1 terms; gradients for gen (G) and dec (F)."""
    e, gc1 = nets.forward(gen, x)
    xr, dc1 = nets.forward(dec, e)
    r1 = xr - x
    v1 = float(np.abs(r1).mean(dtype=np.float64))
    dd1, de = nets.backward(dec, dc1, np.sign(r1) / r1.size)
    dg1, _ = nets.backward(gen, gc1, de)

    h, dc2 = nets.forward(dec, s)
    sr, gc2 = nets.forward(gen, h)
    r2 = sr - s
    v2 = float(np.abs(r2).mean(dtype=np.float64))
    dg2, dh = nets.backward(gen, gc2, np.sign(r2) / r2.size)
    dd2, _ = nets.backward(dec, dc2, dh)

    g_grads = [a + b for a, b in zip(dg1, dg2)]
    d_grads = [a + b for a, b in zip(dd1, dd2)]
    return v1 + v2, g_grads, d_grads


def cycle_consistency_loss(x_batch, s_batch, gen, dec) -> float:
    value, _, _ = cycle_grads(np.asarray(x_batch), np.asarray(s_batch), gen, dec)
    return value


def cls_grads(
    gen: nets.DenseNet, theta: nets.DenseNet, x: np.ndarray, labels: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Cross entropy of theta over G(x); gradients for gen and theta."""
    e, gcache = nets.forward(gen, x)
    logits, tcache = nets.forward(theta, e)
    loss, dlogits = nets.softmax_cross_entropy(logits, labels)
    t_grads, de = nets.backward(theta, tcache, dlogits)
    g_grads, _ = nets.backward(gen, gcache, de)
    return loss, g_grads, t_grads


def classification_loss(semantic_batch, labels, classifier_theta) -> float:
    logits, _ = nets.forward(classifier_theta, np.asarray(semantic_batch))
    loss, _ = nets.softmax_cross_entropy(logits, np.asarray(labels))
    return loss


def autoencoder_grads(
    s: np.ndarray, enc: nets.DenseNet, dec: nets.DenseNet, lam_l21: float
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Reconstruction norm plus row-sparsity penalty; enc and dec grads."""
    h, ecache = nets.forward(enc, s)
    rec, dcache = nets.forward(dec, h)
    r = rec - s
    norms = np.sqrt(np.square(r, dtype=np.float64).sum(axis=1))
    value = float(norms.mean())
    dr = np.zeros_like(r)
    live = norms >= 1e-12
    dr[live] = r[live] / (norms[live, None] * r.shape[0])
    d_grads, dh = nets.backward(dec, dcache, dr)
    e_grads, _ = nets.backward(enc, ecache, dh)
    if lam_l21:
        l21_val, l21_sub = l21_norm(enc.layers[0].w)
        value += lam_l21 * l21_val
        e_grads[0] = e_grads[0] + lam_l21 * l21_sub
    return value, e_grads, d_grads


def autoencoder_loss(s_batch, model, lam_l21: float) -> float:
    s = np.asarray(s_batch)
    if s.ndim != 2 or s.shape[1] != model.encoder.in_dim:
        raise ShapeError(
            f"side batch width {s.shape[-1]} != encoder input {model.encoder.in_dim}"
        )
    value, _, _ = autoencoder_grads(s, model.encoder, model.decoder, lam_l21)
    return value


def total_objective(components: dict[str, float], w: LossWeights) -> float:
    """Weighted sum of the eight component losses."""
    return float(
        sum(getattr(w, name) * float(components[name]) for name in COMPONENTS)
    )
