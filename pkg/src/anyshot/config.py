"""Line-based experiment config: ``key = value`` with ``#`` comments and
dotted section prefixes.  Zero dependencies, strict key validation."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .losses import LossWeights

_EVAL_SETTINGS = (
    "zero_shot",
    "generalized_zero_shot",
    "few_shot",
    "generalized_few_shot",
    "fine_grained",
)


def parse_kv_file(path) -> dict[str, str]:
    """Raw key -> value strings; later lines win; comments stripped."""
    out: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, value = line.partition("=")
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return out


@dataclass
class ExperimentConfig:
    """Validated experiment description shared by every subcommand."""

    sketches: str
    images: str
    taxonomy: str
    word_vectors: str
    seed: int
    out_dir: str
    hier_kind: str = "path"
    n_unseen: int = 3
    min_images: int = 0
    m_dim: int = 64
    batch: int = 32
    epochs: int = 100
    lr: float = 1e-4
    finetune_epochs: int = 40
    finetune_batch: int = 160
    k: int = 5
    replay: float = 0.0
    pairing: str = "coarse"
    weights: LossWeights = field(default_factory=LossWeights)
    settings: list[str] = field(
        default_factory=lambda: ["zero_shot", "generalized_zero_shot"]
    )
    itq_bits: int = 64
    itq_iterations: int = 50
    prune_ratios: list[float] = field(
        default_factory=lambda: [0.0, 0.1, 0.3, 0.5, 0.7, 0.9]
    )


_SCALARS = {
    "data.sketches": ("sketches", str),
    "data.images": ("images", str),
    "data.taxonomy": ("taxonomy", str),
    "data.word_vectors": ("word_vectors", str),
    "seed": ("seed", int),
    "out.dir": ("out_dir", str),
    "side.hier_kind": ("hier_kind", str),
    "split.n_unseen": ("n_unseen", int),
    "split.min_images": ("min_images", int),
    "train.m": ("m_dim", int),
    "train.batch": ("batch", int),
    "train.epochs": ("epochs", int),
    "train.lr": ("lr", float),
    "finetune.epochs": ("finetune_epochs", int),
    "finetune.batch": ("finetune_batch", int),
    "finetune.k": ("k", int),
    "finetune.replay": ("replay", float),
    "finetune.pairing": ("pairing", str),
    "itq.bits": ("itq_bits", int),
    "itq.iterations": ("itq_iterations", int),
}

_WEIGHT_KEYS = {
    f"loss.lambda_{name}": name
    for name in (
        "adv_se",
        "adv_sk",
        "adv_im",
        "cyc_sk",
        "cyc_im",
        "cls_sk",
        "cls_im",
        "aenc",
        "l21",
    )
}

_REQUIRED = ("data.sketches", "data.images", "data.taxonomy", "data.word_vectors", "seed")


def load_config(path) -> ExperimentConfig:
    raw = parse_kv_file(path)
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    known = set(_SCALARS) | set(_WEIGHT_KEYS) | {"eval.settings", "prune.ratios"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    values: dict[str, object] = {}
    for key, (attr, cast) in _SCALARS.items():
        if key in raw:
            try:
                values[attr] = cast(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r}") from exc
    weight_kwargs = {}
    for key, name in _WEIGHT_KEYS.items():
        if key in raw:
            try:
                weight_kwargs[name] = float(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r}") from exc
    if weight_kwargs:
        values["weights"] = LossWeights(**weight_kwargs)
    if "eval.settings" in raw:
        settings = [s.strip() for s in raw["eval.settings"].split(",") if s.strip()]
        for s in settings:
            if s not in _EVAL_SETTINGS:
                raise ConfigError(f"unknown evaluation setting {s!r}")
        values["settings"] = settings
    if "prune.ratios" in raw:
        try:
            values["prune_ratios"] = [
                float(s) for s in raw["prune.ratios"].split(",") if s.strip()
            ]
        except ValueError as exc:
            raise ConfigError(f"bad prune.ratios: {raw['prune.ratios']!r}") from exc

    if "out.dir" not in raw:
        values["out_dir"] = os.path.join(os.path.dirname(str(path)) or ".", "runs")
    cfg = ExperimentConfig(**values)
    for attr in ("sketches", "images", "taxonomy", "word_vectors"):
        p = getattr(cfg, attr)
        if not os.path.exists(p):
            raise ConfigError(f"{attr} file does not exist: {p}")
    if cfg.hier_kind not in ("path", "lin", "jiang_conrath"):
        raise ConfigError(f"unknown side.hier_kind {cfg.hier_kind!r}")
    return cfg
