"""The cross-modal model: nets, adversarial training, fine-tuning, pruning.

Two generators map sketch/image features into an M-dim semantic space;
two decoders map back; three discriminators play the adversarial games;
a linear classifier keeps the space discriminative; a sigmoid
auto-encoder compresses per-class side information into the anchors the
semantic discriminator treats as real.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from . import losses, nets
from .errors import CheckpointError, ContractError, NumericError, ShapeError
from .features import Episode
from .losses import LossWeights
from .sideinfo import ClassEmbeddingTable

DISC_HIDDEN = 256
SIDE_MODES = ("encoded", "raw")
PAIRINGS = ("coarse", "fine")

_GEN_NETS = ("g_sk", "g_im", "f_sk", "f_im", "theta", "encoder", "decoder")
_DISC_NETS = ("d_se", "d_sk", "d_im")


@dataclass
class TrainHyper:
    """Knobs of the training loop; defaults follow the reference protocol."""

    m_dim: int = 64
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    lr: float = 1e-4
    side_mode: str = "encoded"
    replay: float = 0.0
    pairing: str = "coarse"

    def __post_init__(self) -> None:
        if self.side_mode not in SIDE_MODES:
            raise ContractError(f"unknown side_mode {self.side_mode!r}")
        if self.pairing not in PAIRINGS:
            raise ContractError(f"unknown pairing {self.pairing!r}")
        if not 0.0 <= self.replay < 1.0:
            raise ContractError("replay fraction must be in [0, 1)")


@dataclass
class SemPcycModel:
    """All trainable nets plus the side-information anchors they share."""

    g_sk: nets.DenseNet
    g_im: nets.DenseNet
    f_sk: nets.DenseNet
    f_im: nets.DenseNet
    d_se: nets.DenseNet
    d_sk: nets.DenseNet
    d_im: nets.DenseNet
    theta: nets.DenseNet
    encoder: nets.DenseNet
    decoder: nets.DenseNet
    m_dim: int
    feat_dim: int
    side_dim: int
    class_ids: list[int]
    side_anchors: np.ndarray
    side_lo: np.ndarray
    side_span: np.ndarray
    seed: int
    side_mode: str = "encoded"
    epochs_trained: int = 0


def build_model(
    feat_dim: int,
    side_dim: int,
    m_dim: int,
    class_ids: list[int],
    seed: int,
    side_anchors: np.ndarray | None = None,
    side_lo: np.ndarray | None = None,
    side_span: np.ndarray | None = None,
    side_mode: str = "encoded",
) -> SemPcycModel:
    """Fresh Glorot-initialized model; every net gets its own derived seed."""
    if side_mode == "raw" and m_dim != side_dim:
        raise ContractError("raw side mode requires m_dim == side_dim")

    def sub(i: int) -> int:
        return seed * 1000003 + i

    return SemPcycModel(
        g_sk=nets.init_dense([feat_dim, m_dim], ["relu"], sub(0)),
        g_im=nets.init_dense([feat_dim, m_dim], ["relu"], sub(1)),
        f_sk=nets.init_dense([m_dim, feat_dim], ["identity"], sub(2)),
        f_im=nets.init_dense([m_dim, feat_dim], ["identity"], sub(3)),
        d_se=nets.init_dense([m_dim, DISC_HIDDEN, 1], ["leaky_relu", "sigmoid"], sub(4)),
        d_sk=nets.init_dense([feat_dim, DISC_HIDDEN, 1], ["leaky_relu", "sigmoid"], sub(5)),
        d_im=nets.init_dense([feat_dim, DISC_HIDDEN, 1], ["leaky_relu", "sigmoid"], sub(6)),
        theta=nets.init_dense([m_dim, len(class_ids)], ["identity"], sub(7)),
        encoder=nets.init_dense([side_dim, m_dim], ["sigmoid"], sub(8)),
        decoder=nets.init_dense([m_dim, side_dim], ["sigmoid"], sub(9)),
        m_dim=m_dim,
        feat_dim=feat_dim,
        side_dim=side_dim,
        class_ids=list(class_ids),
        side_anchors=np.zeros((0, side_dim), np.float32)
        if side_anchors is None
        else side_anchors,
        side_lo=np.zeros(side_dim, np.float32) if side_lo is None else side_lo,
        side_span=np.ones(side_dim, np.float32) if side_span is None else side_span,
        seed=seed,
        side_mode=side_mode,
    )


def clone_model(model: SemPcycModel) -> SemPcycModel:
    out = copy.copy(model)
    for name in _GEN_NETS + _DISC_NETS:
        setattr(out, name, nets.clone_net(getattr(model, name)))
    out.class_ids = list(model.class_ids)
    out.side_anchors = model.side_anchors.copy()
    out.side_lo = model.side_lo.copy()
    out.side_span = model.side_span.copy()
    return out


def encode(model: SemPcycModel, batch: np.ndarray, modality: str) -> np.ndarray:
    """Project features into the semantic space with the matching generator."""
    if modality == "sketch":
        net = model.g_sk
    elif modality == "image":
        net = model.g_im
    else:
        raise ContractError(f"unknown modality {modality!r}")
    out, _ = nets.forward(net, np.asarray(batch, dtype=np.float32))
    return out


def scale_side_info(
    table: ClassEmbeddingTable, train_classes: list[int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Min-max scale fused rows to [0,1] per dim over the training classes."""
    rows = table.fused[np.asarray(train_classes)]
    lo = rows.min(axis=0)
    span = rows.max(axis=0) - lo
    span = np.where(span < 1e-12, np.float32(1.0), span)
    anchors = ((table.fused - lo) / span).astype(np.float32)
    return anchors, lo.astype(np.float32), span.astype(np.float32)


class _ParamGroup:
    """Concatenated parameter list over named nets, with per-net slices."""

    def __init__(self, model: SemPcycModel, names: tuple[str, ...]):
        self.params: list[np.ndarray] = []
        self.slices: dict[str, slice] = {}
        for name in names:
            p = nets.parameters(getattr(model, name))
            self.slices[name] = slice(len(self.params), len(self.params) + len(p))
            self.params.extend(p)

    def zeros(self) -> list[np.ndarray]:
        return [np.zeros_like(p) for p in self.params]

    def add(self, acc: list[np.ndarray], name: str, grads, weight: float) -> None:
        sl = self.slices[name]
        for a, g in zip(acc[sl.start : sl.stop], grads):
            a += weight * g


def _check_finite(name: str, value: float, epoch: int) -> None:
    if not math.isfinite(value):
        raise NumericError(f"loss term {name!r} became non-finite in epoch {epoch}")


def _epoch_pass(
    model: SemPcycModel,
    sk_vec: np.ndarray,
    sk_pos: np.ndarray,
    im_rows_of: dict[int, np.ndarray],
    im_vec_all: np.ndarray,
    anchors_of_pos: np.ndarray,
    w: LossWeights,
    hyper: TrainHyper,
    rng: np.random.Generator,
    opt_g,
    opt_d,
    gen_group: _ParamGroup,
    disc_group: _ParamGroup,
    epoch: int,
    fixed_pairs: np.ndarray | None = None,
) -> dict[str, float]:
    """One pass over the sketches (or fixed pair list); returns mean losses."""
    n = sk_vec.shape[0] if fixed_pairs is None else fixed_pairs.shape[0]
    order = rng.permutation(n)
    sums: dict[str, float] = {}
    steps = 0
    for start in range(0, n, hyper.batch_size):
        pick = order[start : start + hyper.batch_size]
        if fixed_pairs is None:
            x = sk_vec[pick]
            labels = sk_pos[pick]
            im_rows = np.empty(pick.size, dtype=np.int64)
            for j, pos in enumerate(labels):
                pool = im_rows_of[int(pos)]
                im_rows[j] = pool[rng.integers(pool.size)]
            y = im_vec_all[im_rows]
        else:
            x = sk_vec[fixed_pairs[pick, 0]]
            y = im_vec_all[fixed_pairs[pick, 1]]
            labels = sk_pos[fixed_pairs[pick, 0]]
        s = anchors_of_pos[labels]

        raw_mode = model.side_mode == "raw"
        if raw_mode:
            sem_real = s
        else:
            sem_real, _ = nets.forward(model.encoder, s)
        e_sk, _ = nets.forward(model.g_sk, x)
        e_im, _ = nets.forward(model.g_im, y)
        fb_sk, _ = nets.forward(model.f_sk, sem_real)
        fb_im, _ = nets.forward(model.f_im, sem_real)

        d_acc = disc_group.zeros()
        d_se_v, g = losses.disc_grads(model.d_se, sem_real, [e_sk, e_im], 2.0)
        disc_group.add(d_acc, "d_se", g, 1.0)
        d_sk_v, g = losses.disc_grads(model.d_sk, x, [fb_sk], 1.0)
        disc_group.add(d_acc, "d_sk", g, 1.0)
        d_im_v, g = losses.disc_grads(model.d_im, y, [fb_im], 1.0)
        disc_group.add(d_acc, "d_im", g, 1.0)
        nets.adam_step(disc_group.params, d_acc, opt_d)

        if not raw_mode:
            sem_real, _ = nets.forward(model.encoder, s)
        comp: dict[str, float] = {}
        acc = gen_group.zeros()

        v1, g1 = losses.gen_adv_grads(model.d_se, model.g_sk, x)
        v2, g2 = losses.gen_adv_grads(model.d_se, model.g_im, y)
        comp["adv_se"] = v1 + v2
        gen_group.add(acc, "g_sk", g1, w.adv_se)
        gen_group.add(acc, "g_im", g2, w.adv_se)

        v, g = losses.gen_adv_grads(model.d_sk, model.f_sk, sem_real)
        comp["adv_sk"] = v
        gen_group.add(acc, "f_sk", g, w.adv_sk)
        v, g = losses.gen_adv_grads(model.d_im, model.f_im, sem_real)
        comp["adv_im"] = v
        gen_group.add(acc, "f_im", g, w.adv_im)

        v, gg, gf = losses.cycle_grads(x, sem_real, model.g_sk, model.f_sk)
        comp["cyc_sk"] = v
        gen_group.add(acc, "g_sk", gg, w.cyc_sk)
        gen_group.add(acc, "f_sk", gf, w.cyc_sk)
        v, gg, gf = losses.cycle_grads(y, sem_real, model.g_im, model.f_im)
        comp["cyc_im"] = v
        gen_group.add(acc, "g_im", gg, w.cyc_im)
        gen_group.add(acc, "f_im", gf, w.cyc_im)

        v, gg, gt = losses.cls_grads(model.g_sk, model.theta, x, labels)
        comp["cls_sk"] = v
        gen_group.add(acc, "g_sk", gg, w.cls_sk)
        gen_group.add(acc, "theta", gt, w.cls_sk)
        v, gg, gt = losses.cls_grads(model.g_im, model.theta, y, labels)
        comp["cls_im"] = v
        gen_group.add(acc, "g_im", gg, w.cls_im)
        gen_group.add(acc, "theta", gt, w.cls_im)

        if raw_mode:
            comp["aenc"] = 0.0
        else:
            v, ge, gd = losses.autoencoder_grads(
                s, model.encoder, model.decoder, w.l21
            )
            comp["aenc"] = v
            gen_group.add(acc, "encoder", ge, w.aenc)
            gen_group.add(acc, "decoder", gd, w.aenc)
        nets.adam_step(gen_group.params, acc, opt_g)

        comp["d_se"], comp["d_sk"], comp["d_im"] = d_se_v, d_sk_v, d_im_v
        comp["total"] = losses.total_objective(comp, w)
        for name, value in comp.items():
            _check_finite(name, value, epoch)
            sums[name] = sums.get(name, 0.0) + value
        steps += 1
    return {name: value / steps for name, value in sums.items()}


def train(
    episode: Episode,
    side: ClassEmbeddingTable,
    w: LossWeights,
    hyper: TrainHyper,
) -> tuple[SemPcycModel, list[dict[str, float]]]:
    """Adversarial training on the seen classes of the episode.

    Per batch: one discriminator step on detached fakes, then one joint
    generator/classifier/auto-encoder step.  Deterministic in
    hyper.seed; returns the model plus per-epoch mean losses.
    """
    sk, im = episode.train_sketches, episode.train_images
    if sk.n == 0 or im.n == 0:
        raise ContractError("episode has no training instances")
    if side.n_classes < sk.n_classes:
        raise ContractError(
            f"side info covers {side.n_classes} classes, features name {sk.n_classes}"
        )
    seen = list(episode.split.seen)
    anchors, lo, span = scale_side_info(side, seen)
    m_dim = side.dim if hyper.side_mode == "raw" else hyper.m_dim
    model = build_model(
        feat_dim=sk.dim,
        side_dim=side.dim,
        m_dim=m_dim,
        class_ids=seen,
        seed=hyper.seed,
        side_anchors=anchors,
        side_lo=lo,
        side_span=span,
        side_mode=hyper.side_mode,
    )
    pos_of = {cls: i for i, cls in enumerate(seen)}
    sk_pos = np.array([pos_of[int(c)] for c in sk.labels], dtype=np.int64)
    im_pos = np.array([pos_of[int(c)] for c in im.labels], dtype=np.int64)
    im_rows_of = {}
    for i in range(len(seen)):
        rows = np.flatnonzero(im_pos == i)
        if rows.size == 0:
            raise ContractError(f"seen class {seen[i]} has no training images")
        im_rows_of[i] = rows
    anchors_of_pos = anchors[np.asarray(seen)]

    gen_group = _ParamGroup(model, _GEN_NETS)
    disc_group = _ParamGroup(model, _DISC_NETS)
    opt_g = nets.adam_init(gen_group.params, lr=hyper.lr)
    opt_d = nets.adam_init(disc_group.params, lr=hyper.lr)
    rng = np.random.default_rng([hyper.seed, 101])
    trace = []
    for epoch in range(hyper.epochs):
        trace.append(
            _epoch_pass(
                model, sk.vectors, sk_pos, im_rows_of, im.vectors,
                anchors_of_pos, w, hyper, rng, opt_g, opt_d,
                gen_group, disc_group, epoch,
            )
        )
    model.epochs_trained = hyper.epochs
    return model, trace


def few_shot_finetune(
    model: SemPcycModel,
    episode: Episode,
    w: LossWeights,
    hyper: TrainHyper,
) -> tuple[SemPcycModel, list[dict[str, float]]]:
    """Continue training on the k auxiliary pairs of each unseen class.

    The classifier grows fresh Glorot columns for classes it has not
    seen.  Coarse pairing crosses every auxiliary sketch with every
    auxiliary image of the class; fine pairing matches pair ids.  A
    replay fraction of each batch may revisit seen-class data.
    """
    k = episode.split.k_shot
    if k < 1 or episode.aux_sketches.n == 0:
        raise ContractError("few-shot fine-tuning needs k >= 1 auxiliary instances")
    out = clone_model(model)
    new_ids = [c for c in episode.split.unseen if c not in out.class_ids]
    if new_ids:
        base = out.theta.layers[0]
        fresh = nets.init_dense(
            [out.m_dim, len(new_ids)], ["identity"], model.seed * 1000003 + 77
        ).layers[0]
        base.w = np.hstack([base.w, fresh.w])
        base.b = np.concatenate([base.b, fresh.b])
        out.class_ids = out.class_ids + new_ids

    pos_of = {cls: i for i, cls in enumerate(out.class_ids)}
    aux_sk, aux_im = episode.aux_sketches, episode.aux_images
    pairs = []
    for cls in episode.split.unseen:
        srows = np.flatnonzero(aux_sk.labels == cls)
        irows = np.flatnonzero(aux_im.labels == cls)
        if hyper.pairing == "fine":
            if aux_sk.pair_ids is None or aux_im.pair_ids is None:
                raise ContractError("fine pairing requires pair ids on both sides")
            for i in srows:
                match = irows[aux_im.pair_ids[irows] == aux_sk.pair_ids[i]]
                pairs.extend((i, j) for j in match)
        else:
            pairs.extend((i, j) for i in srows for j in irows)
    if not pairs:
        raise ContractError("no auxiliary sketch-image pairs could be formed")
    pair_arr = np.array(pairs, dtype=np.int64)

    sk_vec, im_vec = aux_sk.vectors, aux_im.vectors
    sk_pos = np.array([pos_of[int(c)] for c in aux_sk.labels], dtype=np.int64)
    if hyper.replay > 0.0 and episode.train_sketches.n:
        # Seen-class pairs get appended to the pool so each shuffled pass
        # revisits roughly a replay fraction of old data.
        tr_sk, tr_im = episode.train_sketches, episode.train_images
        rng_r = np.random.default_rng([hyper.seed, 303])
        n_replay = max(1, int(hyper.replay * pair_arr.shape[0]))
        extra_sk, extra_im, extra_pos = [], [], []
        for i in rng_r.integers(tr_sk.n, size=n_replay):
            cls = int(tr_sk.labels[i])
            pool = np.flatnonzero(tr_im.labels == cls)
            extra_sk.append(tr_sk.vectors[i])
            extra_im.append(tr_im.vectors[pool[rng_r.integers(pool.size)]])
            extra_pos.append(pos_of[cls])
        base_sk, base_im = sk_vec.shape[0], im_vec.shape[0]
        sk_vec = np.vstack([sk_vec, np.asarray(extra_sk)])
        im_vec = np.vstack([im_vec, np.asarray(extra_im)])
        sk_pos = np.concatenate([sk_pos, np.asarray(extra_pos, dtype=np.int64)])
        extra_pairs = np.stack(
            [base_sk + np.arange(n_replay), base_im + np.arange(n_replay)], axis=1
        )
        pair_arr = np.vstack([pair_arr, extra_pairs])

    anchors_of_pos = out.side_anchors[np.asarray(out.class_ids)]
    gen_group = _ParamGroup(out, _GEN_NETS)
    disc_group = _ParamGroup(out, _DISC_NETS)
    opt_g = nets.adam_init(gen_group.params, lr=hyper.lr)
    opt_d = nets.adam_init(disc_group.params, lr=hyper.lr)
    rng = np.random.default_rng([hyper.seed, 202])
    trace = []
    for epoch in range(hyper.epochs):
        trace.append(
            _epoch_pass(
                out, sk_vec, sk_pos, {}, im_vec, anchors_of_pos, w, hyper,
                rng, opt_g, opt_d, gen_group, disc_group, epoch,
                fixed_pairs=pair_arr,
            )
        )
    out.epochs_trained = model.epochs_trained + hyper.epochs
    return out, trace


def prune_side_info(
    model: SemPcycModel, table: ClassEmbeddingTable, ratio: float
) -> tuple[ClassEmbeddingTable, nets.DenseNet, np.ndarray]:
    """Drop the side-info dims with the smallest encoder row norms.

    Returns the reduced table, an encoder restricted to the kept rows,
    and the kept dimension indices.
    """
    if not 0.0 <= ratio < 1.0:
        raise ContractError(f"prune ratio must be in [0, 1), got {ratio}")
    w1 = model.encoder.layers[0].w
    k = w1.shape[0]
    if table.dim != k:
        raise ShapeError(f"table width {table.dim} != encoder input {k}")
    norms = np.sqrt(np.square(w1, dtype=np.float64).sum(axis=1))
    n_drop = int(ratio * k)
    drop = np.argsort(norms, kind="stable")[:n_drop]
    keep = np.setdiff1d(np.arange(k), drop)
    reduced_enc = nets.DenseNet(
        layers=[
            nets.Layer(
                w1[keep].copy(),
                model.encoder.layers[0].b.copy(),
                model.encoder.layers[0].activation,
            )
        ],
        rng_seed=model.encoder.rng_seed,
    )
    return table.take_dims(keep), reduced_enc, keep


_NET_NAMES = _GEN_NETS + _DISC_NETS


def save_model(path, model: SemPcycModel) -> None:
    """Checkpoint tensors plus a text manifest at <path>.manifest."""
    tensors = []
    for name in _NET_NAMES:
        net = getattr(model, name)
        for i, layer in enumerate(net.layers):
            tensors.append((f"{name}.{i}.w", layer.w))
            tensors.append((f"{name}.{i}.b", layer.b))
    tensors.append(("side.anchors", model.side_anchors))
    tensors.append(("side.lo", model.side_lo))
    tensors.append(("side.span", model.side_span))
    nets.save_tensors(path, tensors)
    lines = [
        f"m = {model.m_dim}",
        f"d = {model.feat_dim}",
        f"k = {model.side_dim}",
        f"seed = {model.seed}",
        f"side_mode = {model.side_mode}",
        f"epochs_trained = {model.epochs_trained}",
        "class_ids = " + ",".join(str(c) for c in model.class_ids),
    ]
    with open(str(path) + ".manifest", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> SemPcycModel:
    try:
        with open(str(path) + ".manifest", "r", encoding="utf-8") as fh:
            manifest = {}
            for raw in fh:
                if "=" in raw:
                    key, _, value = raw.partition("=")
                    manifest[key.strip()] = value.strip()
    except OSError as exc:
        raise CheckpointError(f"missing manifest for {path}") from exc
    try:
        m = int(manifest["m"])
        d = int(manifest["d"])
        k = int(manifest["k"])
        seed = int(manifest["seed"])
        side_mode = manifest.get("side_mode", "encoded")
        epochs_trained = int(manifest.get("epochs_trained", "0"))
        class_ids = [int(c) for c in manifest["class_ids"].split(",") if c]
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"bad manifest field: {exc}") from exc
    model = build_model(d, k, m, class_ids, seed, side_mode=side_mode)
    model.epochs_trained = epochs_trained
    named = dict(nets.load_tensors(path))
    for name in _NET_NAMES:
        net = getattr(model, name)
        for i, layer in enumerate(net.layers):
            for suffix in ("w", "b"):
                key = f"{name}.{i}.{suffix}"
                if key not in named:
                    raise CheckpointError(f"checkpoint lacks tensor {key!r}")
                arr = named[key]
                target = layer.w if suffix == "w" else layer.b
                if arr.shape != target.shape:
                    raise CheckpointError(
                        f"tensor {key!r} has shape {arr.shape}, expected {target.shape}"
                    )
                if suffix == "w":
                    layer.w = arr
                else:
                    layer.b = arr
    for key in ("side.anchors", "side.lo", "side.span"):
        if key not in named:
            raise CheckpointError(f"checkpoint lacks tensor {key!r}")
    model.side_anchors = named["side.anchors"]
    model.side_lo = named["side.lo"]
    model.side_span = named["side.span"]
    return model
