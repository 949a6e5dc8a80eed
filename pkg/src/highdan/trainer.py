"""Training loop, checkpoints and full-scene inference.

One step makes three updates in order: the segmenter (encoder + decoder) on
the weighted objective, then the feature discriminator, then the category
discriminator. Disabled adversarial terms contribute zero and their
discriminator is neither built nor updated.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from . import __version__
from .adaptation import attention_correct, lsgan_d_loss, lsgan_g_loss
from .checkpoint import read_container, write_container
from .decoder import predict_probs
from .encoder import EncoderConfig, ordered_modalities
from .errors import ArgumentError, ConfigError, FormatError, NumericError
from .losses import LossWeights, seg_loss, total_loss
from .model import HighDAN
from .raster_store import (PCAProjection, RasterStack, Scene, Tile, band_normalize, fit_pca,
                           load_scene, tile_origins, tile_scene)

log = logging.getLogger(__name__)

TRACE_HEADER = ["iter", "seg", "mce", "dice", "g_feat", "g_cat", "d_feat", "d_cat", "total"]


@dataclass
class TrainConfig:
    source_dir: Optional[str] = None
    target_dir: Optional[str] = None
    out_dir: str = "runs/highdan"
    tile_size: int = 128
    stride: Optional[int] = None          # defaults to tile_size
    batch_size: int = 16
    lr_segmenter: float = 1e-4
    lr_discriminator: float = 1e-4
    epochs: int = 1
    iters_per_epoch: Optional[int] = None  # None: one pass over the source tiles
    weights: LossWeights = field(default_factory=LossWeights)
    pca_components: Optional[int] = 30
    enable_feature_da: bool = True
    enable_category_da: bool = True
    enable_dice: bool = True
    dice_mode: str = "macro"
    apply_da_inference: bool = True
    seed: int = 0
    modalities: Optional[List[str]] = None
    head_width: int = 64
    stream_widths: List[int] = field(default_factory=lambda: [48, 96, 192, 384])
    blocks_per_stage: int = 4
    head_blocks: int = 4
    decoder_widths: List[int] = field(default_factory=lambda: [256, 128, 64])
    feat_disc_widths: List[int] = field(default_factory=lambda: [256, 128, 64])
    cat_disc_widths: List[int] = field(default_factory=lambda: [64, 128, 256, 512])
    checkpoint_every: int = 0              # epochs; 0 writes only the final checkpoint

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = _weights_from_dict(self.weights)
        self.validate()

    @property
    def effective_stride(self) -> int:
        return self.stride or self.tile_size

    @property
    def uses_target(self) -> bool:
        return self.enable_feature_da or self.enable_category_da

    def validate(self, require_paths: bool = False):
        if self.tile_size <= 0 or self.tile_size % 32:
            raise ConfigError(f"tile_size must be a positive multiple of 32, got {self.tile_size}",
                              key="tile_size")
        if self.stride is not None and self.stride < 1:
            raise ConfigError("stride must be >= 1", key="stride")
        for key in ("batch_size", "blocks_per_stage", "head_blocks", "head_width"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1", key=key)
        for key in ("lr_segmenter", "lr_discriminator"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive", key=key)
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0", key="epochs")
        if self.iters_per_epoch is not None and self.iters_per_epoch < 1:
            raise ConfigError("iters_per_epoch must be >= 1", key="iters_per_epoch")
        if self.pca_components is not None and self.pca_components < 0:
            raise ConfigError("pca_components must be >= 0", key="pca_components")
        if self.dice_mode not in ("macro", "global"):
            raise ConfigError(f"dice_mode must be 'macro' or 'global'", key="dice_mode")
        if require_paths:
            if not self.source_dir:
                raise ConfigError("missing required key 'source_dir'", key="source_dir")
            if self.uses_target and not self.target_dir:
                raise ConfigError("adaptation enabled but 'target_dir' is not set", key="target_dir")

    def encoder_config(self, in_channels: Dict[str, int]) -> EncoderConfig:
        return EncoderConfig(in_channels=dict(in_channels), head_width=self.head_width,
                             stream_widths=tuple(self.stream_widths),
                             blocks_per_stage=self.blocks_per_stage, head_blocks=self.head_blocks)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["weights"] = {"lambda": self.weights.lam, "mu": self.weights.mu}
        return d

    @classmethod
    def from_dict(cls, d: dict, require_paths: bool = True) -> "TrainConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}", key=unknown[0])
        kwargs = {}
        for key, value in d.items():
            if key == "weights":
                kwargs[key] = _weights_from_dict(value)
                continue
            _check_type(key, value, known[key])
            kwargs[key] = value
        cfg = cls(**kwargs)
        cfg.validate(require_paths=require_paths)
        return cfg


_INT_KEYS = {"tile_size", "stride", "batch_size", "epochs", "iters_per_epoch", "pca_components",
             "seed", "blocks_per_stage", "head_blocks", "head_width", "checkpoint_every"}
_FLOAT_KEYS = {"lr_segmenter", "lr_discriminator"}
_BOOL_KEYS = {"enable_feature_da", "enable_category_da", "enable_dice", "apply_da_inference"}
_LIST_KEYS = {"stream_widths", "decoder_widths", "feat_disc_widths", "cat_disc_widths"}


def _check_type(key, value, f):
    if value is None and key in {"source_dir", "target_dir", "stride", "iters_per_epoch",
                                 "pca_components", "modalities"}:
        return
    ok = True
    if key in _BOOL_KEYS:
        ok = isinstance(value, bool)
    elif key in _INT_KEYS:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif key in _FLOAT_KEYS:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif key in _LIST_KEYS:
        ok = isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool)
                                             for v in value)
    elif key == "modalities":
        ok = isinstance(value, list) and all(isinstance(v, str) for v in value)
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigError(f"config key {key!r} has invalid value {value!r}", key=key)


def _weights_from_dict(value) -> LossWeights:
    if isinstance(value, LossWeights):
        return value
    if not isinstance(value, dict) or set(value) - {"lambda", "mu"}:
        raise ConfigError("weights must be an object with keys 'lambda' and 'mu'", key="weights")
    try:
        return LossWeights(lam=float(value.get("lambda", 0.5)), mu=float(value.get("mu", 0.5)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid weights: {exc}", key="weights") from exc


# ---------------------------------------------------------------- preprocessing

@dataclass
class Preprocessor:
    """Per-scene band normalization, then a PCA projection (fit on the source) for hsi."""

    modalities: List[str]
    pca: Optional[PCAProjection] = None

    @classmethod
    def fit(cls, scene: Scene, modalities: Sequence[str], pca_components: Optional[int]):
        pca = None
        if "hsi" in modalities and pca_components:
            hsi = band_normalize(scene.get("hsi"))
            k = min(pca_components, hsi.bands)
            if k < pca_components:
                log.warning("hsi has %d bands; using k=%d principal components instead of %d",
                            hsi.bands, k, pca_components)
            pca = fit_pca(hsi, k)
        return cls(list(modalities), pca)

    def in_channels(self, scene: Scene) -> Dict[str, int]:
        out = {}
        for m in self.modalities:
            out[m] = self.pca.k if (m == "hsi" and self.pca is not None) else scene.get(m).bands
        return out

    def __call__(self, scene: Scene) -> Scene:
        missing = [m for m in self.modalities if m not in scene.modality_ids]
        if missing:
            raise ConfigError(f"scene {scene.name!r} lacks modalities {missing}", key="modalities")
        stacks = []
        for m in self.modalities:
            s = band_normalize(scene.get(m))
            if m == "hsi" and self.pca is not None:
                s = self.pca.transform(s)
            stacks.append(s)
        return scene.replace_modalities(stacks)


@dataclass
class Batch:
    inputs: Dict[str, torch.Tensor]
    labels: torch.Tensor

    def __len__(self):
        return self.labels.shape[0]


def make_batch(tiles: Sequence[Tile]) -> Batch:
    if not tiles:
        raise ArgumentError("empty batch")
    inputs = {m: torch.from_numpy(np.stack([t.crops[m] for t in tiles]).astype(np.float32))
              for m in tiles[0].crops}
    labels = torch.from_numpy(np.stack([t.labels for t in tiles]).astype(np.int64))
    return Batch(inputs, labels)


@dataclass
class LossRecord:
    iter: int
    seg: float
    mce: float
    dice: float
    g_feat: float
    g_cat: float
    d_feat: float
    d_cat: float
    total: float

    def row(self):
        return [getattr(self, k) for k in TRACE_HEADER]


# ---------------------------------------------------------------- trainer

class Trainer:
    """Holds the model, optimizers, preprocessing and RNG streams of one run."""

    def __init__(self, config: TrainConfig, in_channels: Dict[str, int], num_classes: int,
                 preprocessor: Optional[Preprocessor] = None, ignore_index: int = 0,
                 class_names: Optional[List[str]] = None, source_name: str = ""):
        self.config = config
        self.num_classes = num_classes
        self.ignore_index = ignore_index
        self.class_names = class_names
        self.source_name = source_name
        self.in_channels = dict(in_channels)
        self.preprocessor = preprocessor or Preprocessor(ordered_modalities(in_channels))
        self.model = HighDAN(
            config.encoder_config(in_channels), num_classes, tuple(config.decoder_widths),
            tuple(config.feat_disc_widths) if config.enable_feature_da else None,
            tuple(config.cat_disc_widths) if config.enable_category_da else None,
        )
        self.init_rng = torch.Generator().manual_seed(config.seed)
        self.model.reset_parameters(self.init_rng)
        self.data_rng = np.random.default_rng([config.seed, 1])
        self.target_rng = np.random.default_rng([config.seed, 2])
        betas = (0.9, 0.999)
        self.opt_seg = torch.optim.Adam(self.model.segmenter_parameters(),
                                        lr=config.lr_segmenter, betas=betas)
        self.opt_feat = (torch.optim.Adam(self.model.feat_disc.parameters(),
                                          lr=config.lr_discriminator, betas=betas)
                         if self.model.feat_disc is not None else None)
        self.opt_cat = (torch.optim.Adam(self.model.cat_disc.parameters(),
                                         lr=config.lr_discriminator, betas=betas)
                        if self.model.cat_disc is not None else None)
        self.iteration = 0
        self.epoch = 0

    @property
    def active_modules(self) -> List[str]:
        mods = ["encoder", "decoder", "mce"]
        if self.config.enable_dice:
            mods.append("dice")
        if self.model.feat_disc is not None:
            mods.append("feature_da")
        if self.model.cat_disc is not None:
            mods.append("category_da")
        return mods

    def train_step(self, source: Batch, target: Optional[Batch] = None) -> LossRecord:
        if len(source) == 0:
            raise ArgumentError("empty source batch")
        cfg, model = self.config, self.model
        feat_on = model.feat_disc is not None and target is not None
        cat_on = model.cat_disc is not None and target is not None
        if (model.feat_disc is not None or model.cat_disc is not None) and target is None:
            raise ArgumentError("adaptation enabled but no target batch given")
        if target is not None and len(target) == 0:
            raise ArgumentError("empty target batch")
        model.train()
        zero = torch.zeros(())

        # (a) segmenter
        for d in (model.feat_disc, model.cat_disc):
            if d is not None:
                d.requires_grad_(False)
        self.opt_seg.zero_grad(set_to_none=True)
        v_s = model.encoder(source.inputs)
        logits_s = model.decoder(v_s)
        seg, mce, dice = seg_loss(logits_s, source.labels, self.ignore_index,
                                  cfg.enable_dice, cfg.dice_mode)
        g_feat, g_cat = zero, zero
        v_t = p_t = None
        if feat_on or cat_on:
            v_t = model.encoder(target.inputs)
            a_t = v_t
            if feat_on:
                scores_t = model.feat_disc(v_t)
                g_feat = lsgan_g_loss(scores_t)
                a_t, _ = attention_correct(v_t, scores_t.detach())
            if cat_on:
                p_t = predict_probs(model.decoder(a_t))
                g_cat = lsgan_g_loss(model.cat_disc(p_t))
        for name, term in (("mce", mce), ("dice", dice)):
            if not torch.isfinite(term):
                raise NumericError(f"loss term {name} is not finite at iteration {self.iteration}",
                                   term=name)
        total = total_loss(seg, g_feat, g_cat, cfg.weights)
        total.backward()
        self.opt_seg.step()

        # (b) feature discriminator, (c) category discriminator
        d_feat = d_cat = zero
        if feat_on:
            d_feat = self._disc_update(model.feat_disc, self.opt_feat,
                                       v_s.detach(), v_t.detach(), "d_feat")
        if cat_on:
            d_cat = self._disc_update(model.cat_disc, self.opt_cat,
                                      predict_probs(logits_s.detach()), p_t.detach(), "d_cat")

        self.iteration += 1
        vals = [float(x.detach()) for x in (seg, mce, dice, g_feat, g_cat, d_feat, d_cat, total)]
        return LossRecord(self.iteration, *vals)

    def _disc_update(self, disc, opt, src, tgt, name):
        disc.requires_grad_(True)
        opt.zero_grad(set_to_none=True)
        loss = lsgan_d_loss(disc(src), disc(tgt))
        if not torch.isfinite(loss):
            raise NumericError(f"loss term {name} is not finite at iteration {self.iteration}",
                               term=name)
        loss.backward()
        opt.step()
        return loss.detach()

    # -------------------------------------------------------------- persistence

    def save(self, path):
        arrays = {f"model.{k}": v.detach().cpu().numpy() for k, v in self.model.state_dict().items()}
        opt_groups = {}
        for tag, opt in (("seg", self.opt_seg), ("feat", self.opt_feat), ("cat", self.opt_cat)):
            if opt is None:
                continue
            sd = opt.state_dict()
            opt_groups[tag] = sd["param_groups"]
            for idx, st in sd["state"].items():
                for k, v in st.items():
                    arrays[f"opt.{tag}.{idx}.{k}"] = torch.as_tensor(v).detach().cpu().numpy()
        if self.preprocessor.pca is not None:
            arrays["pca.mean"] = self.preprocessor.pca.mean
            arrays["pca.components"] = self.preprocessor.pca.components
            arrays["pca.explained_variance"] = self.preprocessor.pca.explained_variance
        arrays["rng.torch"] = self.init_rng.get_state().numpy()
        header = {
            "format": "highdan-checkpoint",
            "version": 1,
            "code_version": __version__,
            "config": self.config.to_dict(),
            "in_channels": self.in_channels,
            "modalities": self.preprocessor.modalities,
            "num_classes": self.num_classes,
            "ignore_index": self.ignore_index,
            "class_names": self.class_names,
            "source_name": self.source_name,
            "iteration": self.iteration,
            "epoch": self.epoch,
            "pca_total_variance": (self.preprocessor.pca.total_variance
                                   if self.preprocessor.pca is not None else None),
            "rng": {"data": self.data_rng.bit_generator.state,
                    "target": self.target_rng.bit_generator.state},
            "optimizers": opt_groups,
        }
        write_container(path, header, arrays)

    @classmethod
    def load(cls, path) -> "Trainer":
        header, arrays = read_container(path)
        if header.get("format") != "highdan-checkpoint":
            raise FormatError(f"{path}: unknown checkpoint format")
        config = TrainConfig.from_dict(header["config"], require_paths=False)
        pca = None
        if "pca.mean" in arrays:
            pca = PCAProjection(arrays["pca.mean"], arrays["pca.components"],
                                arrays["pca.explained_variance"], header["pca_total_variance"])
        pre = Preprocessor(header["modalities"], pca)
        tr = cls(config, header["in_channels"], header["num_classes"], pre,
                 header["ignore_index"], header["class_names"], header["source_name"])
        state = {k[len("model."):]: torch.from_numpy(v) for k, v in arrays.items()
                 if k.startswith("model.")}
        tr.model.load_state_dict(state)
        for tag, opt in (("seg", tr.opt_seg), ("feat", tr.opt_feat), ("cat", tr.opt_cat)):
            if opt is None or tag not in header["optimizers"]:
                continue
            st: Dict[int, dict] = {}
            prefix = f"opt.{tag}."
            for k, v in arrays.items():
                if k.startswith(prefix):
                    idx, name = k[len(prefix):].split(".", 1)
                    st.setdefault(int(idx), {})[name] = torch.from_numpy(v)
            groups = header["optimizers"][tag]
            for g in groups:
                g["betas"] = tuple(g["betas"])
            opt.load_state_dict({"state": st, "param_groups": groups})
        tr.init_rng.set_state(torch.from_numpy(arrays["rng.torch"]))
        tr.data_rng.bit_generator.state = header["rng"]["data"]
        tr.target_rng.bit_generator.state = header["rng"]["target"]
        tr.iteration = header["iteration"]
        tr.epoch = header["epoch"]
        return tr


def train_step(state: Trainer, source: Batch, target: Optional[Batch] = None) -> Tuple[Trainer, LossRecord]:
    record = state.train_step(source, target)
    return state, record


def parameter_checksum(module) -> str:
    import hashlib
    h = hashlib.sha256()
    if module is None:
        return h.hexdigest()
    for name, p in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------- fit

def _select_modalities(config: TrainConfig, source: Scene, target: Optional[Scene]):
    wanted = config.modalities or ordered_modalities(source.modality_ids)
    for scene in (source, target):
        if scene is None:
            continue
        missing = [m for m in wanted if m not in scene.modality_ids]
        if missing:
            raise ConfigError(f"scene {scene.name!r} lacks modalities {missing}", key="modalities")
    return ordered_modalities(wanted)


def prepare(config: TrainConfig, source: Scene, target: Optional[Scene] = None) -> Trainer:
    if config.uses_target and target is None:
        raise ConfigError("adaptation enabled but no target scene given", key="target_dir")
    if target is not None and target.num_classes != source.num_classes:
        raise ConfigError("source and target scenes disagree on num_classes", key="target_dir")
    modalities = _select_modalities(config, source, target)
    pre = Preprocessor.fit(source, modalities, config.pca_components)
    for scene in (source, target):
        if scene is not None and min(scene.height, scene.width) < config.tile_size:
            raise ConfigError(f"tile_size {config.tile_size} exceeds scene {scene.name!r}",
                              key="tile_size")
    return Trainer(config, pre.in_channels(source), source.num_classes, pre, source.ignore_index,
                   list(source.class_names), source.name)


class _Cycler:
    """Endless shuffled stream over tile indices."""

    def __init__(self, n, rng):
        self.n, self.rng, self.buf = n, rng, []

    def take(self, k):
        out = []
        while len(out) < k:
            if not self.buf:
                self.buf = list(self.rng.permutation(self.n))
            out.append(self.buf.pop(0))
        return out


def fit(config: TrainConfig, source: Optional[Scene] = None, target: Optional[Scene] = None,
        out_dir=None, write_files: bool = True) -> Tuple[Trainer, List[LossRecord]]:
    """Run ``config.epochs`` epochs; scenes are loaded from the config paths unless given."""
    if source is None:
        config.validate(require_paths=True)
        source = _load(config.source_dir)
        if config.uses_target:
            target = _load(config.target_dir)
    trainer = prepare(config, source, target)
    out = Path(out_dir or config.out_dir)
    log.info("active modules: %s", ", ".join(trainer.active_modules))

    src_tiles = tile_scene(trainer.preprocessor(source), config.tile_size,
                           config.effective_stride, "source")
    tgt_tiles = []
    if config.uses_target:
        tgt_tiles = tile_scene(trainer.preprocessor(target), config.tile_size,
                               config.effective_stride, "target")
    steps = config.iters_per_epoch or math.ceil(len(src_tiles) / config.batch_size)
    src_stream = _Cycler(len(src_tiles), trainer.data_rng)
    tgt_stream = _Cycler(len(tgt_tiles), trainer.target_rng) if tgt_tiles else None

    trace: List[LossRecord] = []
    writer = fh = None
    if write_files:
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "trace.csv", "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
    try:
        for epoch in range(config.epochs):
            for _ in range(steps):
                sb = make_batch([src_tiles[i] for i in src_stream.take(config.batch_size)])
                tb = None
                if tgt_stream is not None:
                    tb = make_batch([tgt_tiles[i] for i in tgt_stream.take(config.batch_size)])
                rec = trainer.train_step(sb, tb)
                trace.append(rec)
                if writer is not None:
                    writer.writerow(rec.row())
            trainer.epoch = epoch + 1
            if write_files and config.checkpoint_every and trainer.epoch % config.checkpoint_every == 0:
                trainer.save(out / f"epoch_{trainer.epoch:05d}.ckpt")
    finally:
        if fh is not None:
            fh.close()
    if write_files:
        trainer.save(out / "final.ckpt")
    return trainer, trace


def _load(path) -> Scene:
    try:
        return load_scene(path)
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- inference

def infer_full_scene(trainer: Trainer, scene: Scene, tile: Optional[int] = None,
                     stride: Optional[int] = None, apply_da: bool = True,
                     domain: str = "target", batch_size: Optional[int] = None,
                     preprocessed: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Tile, predict and stitch a whole scene.

    Softmax maps of overlapping tiles are averaged; the label is the argmax
    (lowest class id on ties). Attention correction runs only when
    ``apply_da`` is set and ``domain == 'target'``.
    """
    cfg = trainer.config
    tile = tile or cfg.tile_size
    stride = stride or tile
    batch_size = batch_size or cfg.batch_size
    if tile % 32:
        raise ArgumentError(f"tile size must be a multiple of 32, got {tile}")
    missing = [m for m in trainer.preprocessor.modalities if m not in scene.modality_ids]
    if missing:
        raise ConfigError(f"scene {scene.name!r} lacks modalities {missing} used in training",
                          key="modalities")
    prepared = scene if preprocessed else trainer.preprocessor(scene)
    for m in trainer.preprocessor.modalities:
        if prepared.get(m).bands != trainer.in_channels[m]:
            raise ConfigError(f"modality {m} has {prepared.get(m).bands} bands, model expects "
                              f"{trainer.in_channels[m]}", key="modalities")
    correct = apply_da and domain == "target"
    tiles = tile_scene(prepared, tile, stride, domain)
    c = trainer.num_classes
    acc = np.zeros((c, scene.height, scene.width), dtype=np.float64)
    hits = np.zeros((scene.height, scene.width), dtype=np.int64)
    model = trainer.model
    model.eval()
    with torch.no_grad():
        for start in range(0, len(tiles), batch_size):
            chunk = tiles[start:start + batch_size]
            batch = make_batch(chunk)
            inputs = {m: batch.inputs[m] for m in trainer.preprocessor.modalities}
            probs = model.predict(inputs, correct=correct).numpy()
            for t, p in zip(chunk, probs):
                r, col = t.origin
                acc[:, r:r + tile, col:col + tile] += p
                hits[r:r + tile, col:col + tile] += 1
    probs = (acc / hits).astype(np.float32)
    offset = 1 if trainer.ignore_index == 0 else 0
    labels = (np.argmax(probs, axis=0) + offset).astype(np.uint8)
    return labels, probs


def coverage_counts(height: int, width: int, tile: int, stride: int) -> np.ndarray:
    """Number of tiles covering each pixel under the clamp-to-border tiling."""
    rows = np.zeros(height, dtype=np.int64)
    for r in tile_origins(height, tile, stride):
        rows[r:r + tile] += 1
    cols = np.zeros(width, dtype=np.int64)
    for c in tile_origins(width, tile, stride):
        cols[c:c + tile] += 1
    return rows[:, None] * cols[None, :]
