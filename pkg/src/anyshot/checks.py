"""Finite-difference verification of every loss term's gradients.

Each term is checked on many small random instances: one net at a time
is perturbed while its partners stay frozen, so the checker isolates
exactly the gradients that net receives during training.
"""
from __future__ import annotations

import numpy as np

from . import losses, nets

TERMS = (
    "disc_semantic",
    "disc_feature",
    "gen_adv_semantic",
    "gen_adv_feature",
    "cycle_generator",
    "cycle_decoder",
    "classification_generator",
    "classification_theta",
    "autoencoder_encoder",
    "autoencoder_decoder",
)


def _instance(seed: int):
    """Tiny random nets and batches exercising every code path."""
    rng = np.random.default_rng(seed)
    d, m, k, n_cls, b = 7, 4, 6, 3, 5
    mk = lambda sizes, acts, off: nets.cast_net(
        nets.init_dense(sizes, acts, seed * 31 + off), np.float64
    )
    return {
        "g": mk([d, m], ["relu"], 0),
        "f": mk([m, d], ["identity"], 1),
        "d_se": mk([m, 8, 1], ["leaky_relu", "sigmoid"], 2),
        "d_ft": mk([d, 8, 1], ["leaky_relu", "sigmoid"], 3),
        "theta": mk([m, n_cls], ["identity"], 4),
        "enc": mk([k, m], ["sigmoid"], 5),
        "dec": mk([m, k], ["sigmoid"], 6),
        "x": rng.standard_normal((b, d)),
        "s_m": rng.uniform(0.1, 0.9, (b, m)),
        "s_k": rng.uniform(0.0, 1.0, (b, k)),
        "labels": rng.integers(0, n_cls, b),
        "fake_m": rng.standard_normal((b, m)),
        "fake_d": rng.standard_normal((b, d)),
    }


def _term_error(term: str, inst: dict) -> float:
    g, f = inst["g"], inst["f"]
    if term == "disc_semantic":
        fn = lambda net, batch: losses.disc_grads(
            net, inst["s_m"], [inst["fake_m"], inst["fake_m"] * 0.5], 2.0
        )
        return nets.grad_check(inst["d_se"], fn, None)
    if term == "disc_feature":
        fn = lambda net, batch: losses.disc_grads(net, inst["x"], [inst["fake_d"]], 1.0)
        return nets.grad_check(inst["d_ft"], fn, None)
    if term == "gen_adv_semantic":
        fn = lambda net, batch: losses.gen_adv_grads(inst["d_se"], net, inst["x"])
        return nets.grad_check(g, fn, None)
    if term == "gen_adv_feature":
        fn = lambda net, batch: losses.gen_adv_grads(inst["d_ft"], net, inst["s_m"])
        return nets.grad_check(f, fn, None)
    if term == "cycle_generator":
        fn = lambda net, batch: losses.cycle_grads(inst["x"], inst["s_m"], net, f)[:2]
        return nets.grad_check(g, fn, None)
    if term == "cycle_decoder":
        fn = lambda net, batch: (
            losses.cycle_grads(inst["x"], inst["s_m"], g, net)[0],
            losses.cycle_grads(inst["x"], inst["s_m"], g, net)[2],
        )
        return nets.grad_check(f, fn, None)
    if term == "classification_generator":
        fn = lambda net, batch: losses.cls_grads(net, inst["theta"], inst["x"], inst["labels"])[:2]
        return nets.grad_check(g, fn, None)
    if term == "classification_theta":
        fn = lambda net, batch: (
            losses.cls_grads(g, net, inst["x"], inst["labels"])[0],
            losses.cls_grads(g, net, inst["x"], inst["labels"])[2],
        )
        return nets.grad_check(inst["theta"], fn, None)
    if term == "autoencoder_encoder":
        fn = lambda net, batch: losses.autoencoder_grads(
            inst["s_k"], net, inst["dec"], 0.7
        )[:2]
        return nets.grad_check(inst["enc"], fn, None)
    if term == "autoencoder_decoder":
        fn = lambda net, batch: (
            losses.autoencoder_grads(inst["s_k"], inst["enc"], net, 0.7)[0],
            losses.autoencoder_grads(inst["s_k"], inst["enc"], net, 0.7)[2],
        )
        return nets.grad_check(inst["dec"], fn, None)
    raise ValueError(f"unknown term {term!r}")


def gradient_suite(instances: int = 20, seed: int = 0) -> dict[str, float]:
    """Max relative finite-difference error per loss term."""
    worst = {term: 0.0 for term in TERMS}
    for i in range(instances):
        inst = _instance(seed * 10007 + i)
        for term in TERMS:
            worst[term] = max(worst[term], _term_error(term, inst))
    return worst
