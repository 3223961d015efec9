"""Experiment driver: subcommands over a line-based config file.

Every artifact is a deterministic function of (config, seed); timings
and progress go to stderr logging only.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import checks, evaluation, itq, model as model_mod, nets, sideinfo
from .config import ExperimentConfig, load_config
from .errors import AnyshotError, ConfigError
from .features import read_features, build_split, sample_episode
from .losses import LossWeights

log = logging.getLogger("anyshot")

TRACE_COLUMNS = (
    "adv_se", "adv_sk", "adv_im", "cyc_sk", "cyc_im",
    "cls_sk", "cls_im", "aenc", "d_se", "d_sk", "d_im", "total",
)

ABLATIONS = (
    "adversarial_only",
    "adversarial_cycle",
    "adversarial_classification",
    "full",
    "no_selection",
    "no_regularizer",
)


def _load_pair(cfg: ExperimentConfig):
    sk = read_features(cfg.sketches)
    im = read_features(cfg.images)
    if sk.modality != "sketch" or im.modality != "image":
        raise ConfigError("data.sketches/data.images modalities are swapped")
    return sk, im


def _side_table(cfg: ExperimentConfig, label_names) -> sideinfo.ClassEmbeddingTable:
    tax = sideinfo.load_taxonomy(cfg.taxonomy, label_names)
    hier = sideinfo.hier_table(tax, cfg.hier_kind)
    text = sideinfo.load_word_vectors(cfg.word_vectors, label_names)
    return sideinfo.fuse_side_info(text, hier)


def _episode(cfg: ExperimentConfig, sk, im, k: int):
    split = build_split(
        sk, im, cfg.n_unseen, cfg.seed, k_shot=k,
        min_images_per_test_class=cfg.min_images,
    )
    return sample_episode(sk, im, split)


def _hyper(cfg: ExperimentConfig, epochs=None, side_mode="encoded", batch=None):
    return model_mod.TrainHyper(
        m_dim=cfg.m_dim,
        batch_size=cfg.batch if batch is None else batch,
        epochs=cfg.epochs if epochs is None else epochs,
        seed=cfg.seed,
        lr=cfg.lr,
        side_mode=side_mode,
        replay=cfg.replay,
        pairing=cfg.pairing,
    )


def _write_trace(path, trace) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch\t" + "\t".join(TRACE_COLUMNS) + "\n")
        for epoch, row in enumerate(trace):
            cells = [f"{row[c]:.12g}" for c in TRACE_COLUMNS]
            fh.write(f"{epoch}\t" + "\t".join(cells) + "\n")


def _model_path(out_dir: str, k: int = 0) -> str:
    name = "model.spck" if k == 0 else f"model_k{k}.spck"
    return os.path.join(out_dir, name)


def _train_base(cfg: ExperimentConfig, out_dir: str):
    """Load the base checkpoint or train and persist it."""
    path = _model_path(out_dir)
    if os.path.exists(path):
        return model_mod.load_model(path)
    sk, im = _load_pair(cfg)
    side = _side_table(cfg, sk.label_names)
    episode = _episode(cfg, sk, im, k=0)
    trained, trace = model_mod.train(episode, side, cfg.weights, _hyper(cfg))
    model_mod.save_model(path, trained)
    _write_trace(os.path.join(out_dir, "loss_trace.tsv"), trace)
    log.info("trained base model: %s", path)
    return trained


def _finetuned(cfg: ExperimentConfig, out_dir: str, k: int):
    path = _model_path(out_dir, k)
    if os.path.exists(path):
        return model_mod.load_model(path)
    base = _train_base(cfg, out_dir)
    sk, im = _load_pair(cfg)
    episode = _episode(cfg, sk, im, k=k)
    hyper = _hyper(cfg, epochs=cfg.finetune_epochs, batch=cfg.finetune_batch)
    tuned, trace = model_mod.few_shot_finetune(base, episode, cfg.weights, hyper)
    model_mod.save_model(path, tuned)
    _write_trace(os.path.join(out_dir, f"finetune_trace_k{k}.tsv"), trace)
    log.info("fine-tuned model (k=%d): %s", k, path)
    return tuned


def cmd_build_sideinfo(cfg: ExperimentConfig, out_dir: str, args) -> int:
    sk, _ = _load_pair(cfg)
    table = _side_table(cfg, sk.label_names)
    path = os.path.join(out_dir, "sideinfo.spck")
    nets.save_tensors(
        path, [("side.text", table.text_vectors), ("side.hier", table.hier_vectors)]
    )
    log.info(
        "side info: %d classes, text %d + hier %d = %d dims -> %s",
        table.n_classes, table.text_vectors.shape[1],
        table.hier_vectors.shape[1], table.dim, path,
    )
    return 0


def cmd_train(cfg: ExperimentConfig, out_dir: str, args) -> int:
    path = _model_path(out_dir)
    if os.path.exists(path):
        os.remove(path)
    _train_base(cfg, out_dir)
    return 0


def cmd_finetune(cfg: ExperimentConfig, out_dir: str, args) -> int:
    k = args.k if args.k is not None else cfg.k
    if k < 1:
        raise ConfigError("finetune needs --k >= 1")
    path = _model_path(out_dir, k)
    if os.path.exists(path):
        os.remove(path)
    _finetuned(cfg, out_dir, k)
    return 0


def _fit_codec(cfg: ExperimentConfig, trained, episode) -> itq.ItqCodec:
    train_emb = np.vstack(
        [
            model_mod.encode(trained, episode.train_sketches.vectors, "sketch"),
            model_mod.encode(trained, episode.train_images.vectors, "image"),
        ]
    )
    codec, _ = itq.itq_fit(
        train_emb, cfg.itq_bits, cfg.itq_iterations, seed=cfg.seed
    )
    return codec


def cmd_evaluate(cfg: ExperimentConfig, out_dir: str, args) -> int:
    settings = [args.setting] if args.setting else cfg.settings
    k = args.k if args.k is not None else cfg.k
    sk, im = _load_pair(cfg)
    for setting in settings:
        few = setting in ("few_shot", "generalized_few_shot")
        trained = _finetuned(cfg, out_dir, k) if few else _train_base(cfg, out_dir)
        episode = _episode(cfg, sk, im, k=k if few else 0)
        spec = evaluation.make_gallery_spec(episode, setting)
        codec = _fit_codec(cfg, trained, episode) if args.binary else None
        report = evaluation.evaluate(trained, spec, hash_codec=codec)
        suffix = setting + ("_binary" if args.binary else "")
        evaluation.write_report(
            report,
            os.path.join(out_dir, f"report_{suffix}.tsv"),
            os.path.join(out_dir, f"pr_curve_{suffix}.tsv"),
        )
        log.info(
            "%s: mAP@all %.4f  P@100 %.4f  (%d queries, %d excluded)",
            suffix, report.map_at_all, report.precision_at_100,
            report.n_queries, report.n_excluded,
        )
    return 0


def cmd_prune_sweep(cfg: ExperimentConfig, out_dir: str, args) -> int:
    base = _train_base(cfg, out_dir)
    sk, im = _load_pair(cfg)
    side = _side_table(cfg, sk.label_names)
    episode = _episode(cfg, sk, im, k=0)
    rows = []
    for ratio in cfg.prune_ratios:
        reduced, _, keep = model_mod.prune_side_info(base, side, ratio)
        trained, _ = model_mod.train(episode, reduced, cfg.weights, _hyper(cfg))
        spec = evaluation.make_gallery_spec(episode, "zero_shot")
        report = evaluation.evaluate(trained, spec)
        rows.append((ratio, keep.size, report.map_at_all))
        log.info("prune %.2f: kept %d dims, mAP %.4f", ratio, keep.size, report.map_at_all)
    with open(os.path.join(out_dir, "prune_sweep.tsv"), "w", encoding="utf-8") as fh:
        fh.write("ratio\tkept_dims\tmap_at_all\n")
        for ratio, kept, value in rows:
            fh.write(f"{ratio:.12g}\t{kept}\t{value:.12g}\n")
    return 0


def ablation_weights(name: str, base: LossWeights) -> LossWeights:
    """Loss-weight variant for one named ablation row."""
    import dataclasses

    if name == "adversarial_only":
        return dataclasses.replace(base, cyc_sk=0.0, cyc_im=0.0, cls_sk=0.0, cls_im=0.0)
    if name == "adversarial_cycle":
        return dataclasses.replace(base, cls_sk=0.0, cls_im=0.0)
    if name == "adversarial_classification":
        return dataclasses.replace(base, cyc_sk=0.0, cyc_im=0.0)
    if name == "no_regularizer":
        return dataclasses.replace(base, l21=0.0)
    return base


def cmd_ablate(cfg: ExperimentConfig, out_dir: str, args) -> int:
    sk, im = _load_pair(cfg)
    side = _side_table(cfg, sk.label_names)
    episode = _episode(cfg, sk, im, k=0)
    rows = []
    for name in ABLATIONS:
        side_mode = "raw" if name == "no_selection" else "encoded"
        weights = ablation_weights(name, cfg.weights)
        trained, _ = model_mod.train(
            episode, side, weights, _hyper(cfg, side_mode=side_mode)
        )
        spec = evaluation.make_gallery_spec(episode, "zero_shot")
        report = evaluation.evaluate(trained, spec)
        rows.append((name, report.map_at_all))
        log.info("ablation %s: mAP %.4f", name, report.map_at_all)
    with open(os.path.join(out_dir, "ablation.tsv"), "w", encoding="utf-8") as fh:
        fh.write("config\tmap_at_all\n")
        for name, value in rows:
            fh.write(f"{name}\t{value:.12g}\n")
    return 0


def cmd_gradcheck(cfg: ExperimentConfig, out_dir: str, args) -> int:
    worst = checks.gradient_suite()
    path = os.path.join(out_dir, "gradcheck.txt")
    with open(path, "w", encoding="utf-8") as fh:
        for term, err in worst.items():
            fh.write(f"{term}\t{err:.6e}\n")
    top = max(worst.values())
    log.info("gradcheck max relative error %.3e -> %s", top, path)
    return 0 if top < 1e-4 else 1


COMMANDS = {
    "build-sideinfo": cmd_build_sideinfo,
    "train": cmd_train,
    "finetune": cmd_finetune,
    "evaluate": cmd_evaluate,
    "prune-sweep": cmd_prune_sweep,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anyshot",
        description="Cross-modal any-shot retrieval experiments on precomputed features",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="override output directory")
        if name in ("finetune", "evaluate"):
            p.add_argument("--k", type=int, default=None, help="shots per unseen class")
        if name == "evaluate":
            p.add_argument("--setting", default=None, help="evaluation setting")
            p.add_argument("--binary", action="store_true", help="rank by ITQ codes")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out_dir = args.out if args.out else cfg.out_dir
        os.makedirs(out_dir, exist_ok=True)
        return COMMANDS[args.command](cfg, out_dir, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AnyshotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
