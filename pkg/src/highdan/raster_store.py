"""Multimodal scene container, preprocessing, tiling and the synthetic scene generator.

On-disk layout of a scene directory::

    manifest.json      name, height, width, num_classes, ignore_index,
                       class_names, label_file, modalities[{id, file, bands, dtype}]
    <id>.f32           little-endian float32, bands x height x width, C order
    labels.u8          uint8, height x width

Label 0 is the ignore index; classes are numbered 1..num_classes.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import ArgumentError, DataError, FormatError, IntegrityError

MODALITY_ORDER = ("hsi", "msi", "sar")

CLASS_NAMES = (
    "urban fabric",
    "industrial, commercial and transport",
    "mine, dump and construction",
    "artificial vegetated areas",
    "arable land",
    "permanent crops",
    "pastures",
    "forests",
    "shrub",
    "open spaces with little vegetation",
    "inland wetlands",
    "water bodies",
    "street network",
)

MANIFEST_KEYS = {
    "name", "height", "width", "num_classes", "ignore_index",
    "class_names", "label_file", "modalities",
}
MODALITY_KEYS = {"id", "file", "bands", "dtype"}


def default_class_names(num_classes: int) -> List[str]:
    if num_classes <= len(CLASS_NAMES):
        return list(CLASS_NAMES[:num_classes])
    return list(CLASS_NAMES) + [f"class_{i}" for i in range(len(CLASS_NAMES) + 1, num_classes + 1)]


@dataclass
class RasterStack:
    modality_id: str
    data: np.ndarray  # (bands, H, W) float32

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] < 1:
            raise ArgumentError(
                f"{self.modality_id}: expected bands x height x width, got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise DataError(f"{self.modality_id}: non-finite values in raster")

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]


@dataclass
class Scene:
    name: str
    modalities: List[RasterStack]
    labels: np.ndarray  # (H, W) uint8
    num_classes: int = 13
    ignore_index: int = 0
    class_names: Optional[List[str]] = None

    def __post_init__(self):
        if self.class_names is None:
            self.class_names = default_class_names(self.num_classes)
        self.validate()

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def modality_ids(self) -> List[str]:
        return [m.modality_id for m in self.modalities]

    def get(self, modality_id: str) -> RasterStack:
        for m in self.modalities:
            if m.modality_id == modality_id:
                return m
        raise KeyError(modality_id)

    def validate(self):
        if not self.modalities:
            raise ArgumentError("scene needs at least one modality")
        ids = self.modality_ids
        if len(set(ids)) != len(ids):
            raise ArgumentError(f"duplicate modality ids: {ids}")
        if self.labels.dtype != np.uint8 or self.labels.ndim != 2:
            raise ArgumentError("labels must be a 2-D uint8 array")
        for m in self.modalities:
            if m.shape != self.labels.shape:
                raise IntegrityError(
                    f"modality {m.modality_id} has extent {m.shape}, labels have {self.labels.shape}")
        if len(self.class_names) != self.num_classes:
            raise IntegrityError("class_names length differs from num_classes")
        if self.labels.size and int(self.labels.max()) > self.num_classes:
            raise DataError(f"label value {int(self.labels.max())} exceeds num_classes={self.num_classes}")

    def replace_modalities(self, modalities: List[RasterStack]) -> "Scene":
        return Scene(self.name, modalities, self.labels, self.num_classes,
                     self.ignore_index, list(self.class_names))

    def checksums(self) -> Dict[str, str]:
        out = {m.modality_id: _sha256(m.data.astype("<f4")) for m in self.modalities}
        out["labels"] = _sha256(self.labels)
        return out


@dataclass
class Tile:
    origin: Tuple[int, int]
    crops: Dict[str, np.ndarray]
    labels: np.ndarray
    domain: str = "source"

    @property
    def size(self) -> int:
        return self.labels.shape[0]


@dataclass
class ShiftSpec:
    """Radiometric and class-prior shift applied to the target scene."""

    gain_range: Tuple[float, float] = (1.0, 1.0)
    offset_range: Tuple[float, float] = (0.0, 0.0)
    noise_std: float = 0.0
    skew: float = 0.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.gain_range
        if lo <= 0 or hi <= 0 or hi < lo:
            raise ArgumentError(f"gain range must be positive and ordered, got {self.gain_range}")
        if self.offset_range[1] < self.offset_range[0]:
            raise ArgumentError(f"offset range must be ordered, got {self.offset_range}")
        if self.noise_std < 0:
            raise ArgumentError("noise_std must be >= 0")

    def to_dict(self):
        return {"gain_range": list(self.gain_range), "offset_range": list(self.offset_range),
                "noise_std": self.noise_std, "skew": self.skew, "seed": self.seed}


def _sha256(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()


# ---------------------------------------------------------------- persistence

def save_scene(scene: Scene, directory) -> Dict[str, str]:
    """Write ``scene`` to ``directory``; returns sha256 checksums of the written arrays."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for m in scene.modalities:
        fname = f"{m.modality_id}.f32"
        m.data.astype("<f4", copy=False).tofile(d / fname)
        entries.append({"id": m.modality_id, "file": fname, "bands": m.bands, "dtype": "f32"})
    scene.labels.astype(np.uint8, copy=False).tofile(d / "labels.u8")
    manifest = {
        "name": scene.name,
        "height": scene.height,
        "width": scene.width,
        "num_classes": scene.num_classes,
        "ignore_index": scene.ignore_index,
        "class_names": list(scene.class_names),
        "label_file": "labels.u8",
        "modalities": entries,
    }
    with open(d / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return scene.checksums()


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise FormatError(f"{where}: unknown keys {sorted(unknown)}")
    missing = allowed - set(obj)
    if missing:
        raise FormatError(f"{where}: missing keys {sorted(missing)}")


def _read_raw(path: Path, dtype, expected: int) -> np.ndarray:
    nbytes = path.stat().st_size
    itemsize = np.dtype(dtype).itemsize
    if nbytes != expected * itemsize:
        raise IntegrityError(
            f"{path.name}: {nbytes} bytes on disk, manifest implies {expected * itemsize}")
    return np.fromfile(path, dtype=dtype)


def load_scene(directory) -> Scene:
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.is_file():
        raise FormatError(f"{d}: manifest.json not found")
    try:
        with open(mpath) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: invalid JSON ({exc})") from exc
    _check_keys(manifest, MANIFEST_KEYS, "manifest.json")

    h, w = int(manifest["height"]), int(manifest["width"])
    referenced = {"manifest.json", manifest["label_file"]}
    stacks = []
    for i, entry in enumerate(manifest["modalities"]):
        _check_keys(entry, MODALITY_KEYS, f"manifest.json modalities[{i}]")
        if entry["dtype"] != "f32":
            raise FormatError(f"modality {entry['id']}: unsupported dtype {entry['dtype']!r}")
        path = d / entry["file"]
        if not path.is_file():
            raise FormatError(f"{d}: referenced file {entry['file']} missing")
        referenced.add(entry["file"])
        bands = int(entry["bands"])
        raw = _read_raw(path, "<f4", bands * h * w)
        data = raw.reshape(bands, h, w).astype(np.float32, copy=False)
        if not np.isfinite(data).all():
            raise DataError(f"{entry['file']}: NaN or Inf values")
        stacks.append(RasterStack(entry["id"], data))

    lpath = d / manifest["label_file"]
    if not lpath.is_file():
        raise FormatError(f"{d}: label file {manifest['label_file']} missing")
    labels = _read_raw(lpath, np.uint8, h * w).reshape(h, w)

    extra = set(os.listdir(d)) - referenced
    if extra:
        raise FormatError(f"{d}: files not referenced by manifest: {sorted(extra)}")

    return Scene(
        name=manifest["name"],
        modalities=stacks,
        labels=labels,
        num_classes=int(manifest["num_classes"]),
        ignore_index=int(manifest["ignore_index"]),
        class_names=list(manifest["class_names"]),
    )


# ---------------------------------------------------------------- preprocessing

def band_normalize(stack: RasterStack) -> RasterStack:
    """Per-band min-max scaling to [0, 1]; constant bands become zeros."""
    x = stack.data.astype(np.float64)
    lo = x.min(axis=(1, 2), keepdims=True)
    hi = x.max(axis=(1, 2), keepdims=True)
    span = hi - lo
    out = np.where(span > 0, (x - lo) / np.where(span > 0, span, 1.0), 0.0)
    return RasterStack(stack.modality_id, out.astype(np.float32))


def normalize_scene(scene: Scene) -> Scene:
    return scene.replace_modalities([band_normalize(m) for m in scene.modalities])


@dataclass
class PCAProjection:
    mean: np.ndarray                 # (bands,)
    components: np.ndarray           # (k, bands), orthonormal rows
    explained_variance: np.ndarray   # (k,)
    total_variance: float

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance == 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def transform(self, stack: RasterStack) -> RasterStack:
        if stack.bands != self.mean.shape[0]:
            raise ArgumentError(
                f"projection fitted on {self.mean.shape[0]} bands, stack has {stack.bands}")
        b, h, w = stack.data.shape
        x = stack.data.reshape(b, -1).T.astype(np.float64) - self.mean
        scores = x @ self.components.T
        return RasterStack(stack.modality_id, scores.T.reshape(self.k, h, w).astype(np.float32))

    def inverse_transform(self, stack: RasterStack) -> np.ndarray:
        k, h, w = stack.data.shape
        scores = stack.data.reshape(k, -1).T.astype(np.float64)
        x = scores @ self.components + self.mean
        return x.T.reshape(-1, h, w)


def fit_pca(stack: RasterStack, k: int) -> PCAProjection:
    b, h, w = stack.data.shape
    n = h * w
    if not 1 <= k <= b:
        raise ArgumentError(f"k must lie in [1, {b}], got {k}")
    if n < k:
        raise ArgumentError(f"need at least k={k} pixels, have {n}")
    x = stack.data.reshape(b, -1).T.astype(np.float64)
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    comps = vt[:k].copy()
    idx = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(k), idx])
    signs[signs == 0] = 1.0
    comps *= signs[:, None]
    denom = max(n - 1, 1)
    var = s ** 2 / denom
    return PCAProjection(mean=mean, components=comps,
                         explained_variance=var[:k].copy(), total_variance=float(var.sum()))


def pca_reduce(stack: RasterStack, k: int) -> RasterStack:
    return fit_pca(stack, k).transform(stack)


# ---------------------------------------------------------------- tiling

def tile_origins(extent: int, tile: int, stride: int) -> List[int]:
    """Window starts along one axis; the last window is clamped to the border."""
    if tile > extent:
        raise ArgumentError(f"tile {tile} larger than extent {extent}")
    if stride < 1:
        raise ArgumentError("stride must be >= 1")
    count = math.ceil((extent - tile) / stride) + 1
    return [min(i * stride, extent - tile) for i in range(count)]


def tile_scene(scene: Scene, tile: int, stride: int, domain: str = "source") -> List[Tile]:
    """Sliding-window tiles; crops are views into the scene arrays."""
    if domain not in ("source", "target"):
        raise ArgumentError(f"domain must be 'source' or 'target', got {domain!r}")
    if tile > min(scene.height, scene.width):
        raise ArgumentError(f"tile {tile} larger than scene {scene.height}x{scene.width}")
    rows = tile_origins(scene.height, tile, stride)
    cols = tile_origins(scene.width, tile, stride)
    tiles = []
    for r in rows:
        for c in cols:
            crops = {m.modality_id: m.data[:, r:r + tile, c:c + tile] for m in scene.modalities}
            tiles.append(Tile((r, c), crops, scene.labels[r:r + tile, c:c + tile], domain))
    return tiles


# ---------------------------------------------------------------- synthetic scenes

DEFAULT_BANDS = {"hsi": 32, "msi": 4, "sar": 2}


def class_priors(num_classes: int, skew: float) -> np.ndarray:
    """Exponentially tilted priors; positive skew moves mass toward high class ids."""
    z = np.linspace(-1.0, 1.0, num_classes) if num_classes > 1 else np.zeros(1)
    p = np.exp(skew * z)
    return p / p.sum()


def _layout(seed: int, height: int, width: int, num_classes: int, n_cells: int,
            skew: float, unlabeled_fraction: float):
    rng = np.random.default_rng([seed, 11])
    points = rng.uniform((0.0, 0.0), (height, width), size=(n_cells, 2))
    u = rng.uniform(size=n_cells)
    unl = rng.uniform(size=n_cells) < unlabeled_fraction
    cell = math.sqrt(height * width / n_cells)
    warp = rng.normal(size=(2, height, width))
    warp = np.stack([ndimage.gaussian_filter(w_, sigma=cell / 3, mode="wrap") for w_ in warp])
    warp *= (0.35 * cell) / max(warp.std(), 1e-12)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    coords = np.stack([yy + warp[0], xx + warp[1]], axis=-1).reshape(-1, 2)
    _, nearest = cKDTree(points).query(coords)
    cdf = np.cumsum(class_priors(num_classes, skew))
    cdf[-1] = 1.0
    cell_class = np.searchsorted(cdf, u, side="left") + 1
    truth = cell_class[nearest].reshape(height, width).astype(np.uint8)
    labels = np.where(unl[nearest].reshape(height, width), 0, truth).astype(np.uint8)
    return truth, labels


def _signatures(seed: int, num_classes: int, bands: Dict[str, int]) -> Dict[str, np.ndarray]:
    rng = np.random.default_rng([seed, 23])
    sigs = {}
    for mid in sorted(bands):
        b = bands[mid]
        if b >= 8:
            # smooth, correlated spectra so that a few components carry most variance
            basis = ndimage.gaussian_filter1d(rng.normal(size=(4, b)), sigma=b / 8, axis=1)
            basis /= np.abs(basis).max(axis=1, keepdims=True) + 1e-12
            sigs[mid] = 0.5 + 0.2 * rng.normal(size=(num_classes, 4)) @ basis / 2
        else:
            sigs[mid] = rng.uniform(0.15, 0.85, size=(num_classes, b))
    return sigs


def _render(truth, sigs, bands, order, noise_seed, pixel_noise):
    rng = np.random.default_rng([noise_seed, 37])
    out = {}
    for mid in order:
        sig = sigs[mid]                               # (C, B)
        img = sig[truth.astype(np.int64) - 1].transpose(2, 0, 1)   # (B, H, W)
        out[mid] = img + pixel_noise * rng.normal(size=img.shape)
    return out


def synth_scene_pair(
    layout_seed: int,
    shift: Optional[ShiftSpec] = None,
    height: int = 128,
    width: int = 128,
    bands: Optional[Dict[str, int]] = None,
    num_classes: int = 13,
    n_cells: Optional[int] = None,
    pixel_noise: float = 0.05,
    target_layout_seed: Optional[int] = None,
    unlabeled_fraction: float = 0.0,
    name: str = "synth",
) -> Tuple[Scene, Scene]:
    """Deterministic (source, target) pair sharing class signatures.

    The target uses ``target_layout_seed`` (defaults to ``layout_seed``) for its
    partition, class priors tilted by ``shift.skew``, then a per-band affine
    transform and extra Gaussian noise drawn from ``shift.seed``.
    """
    shift = shift or ShiftSpec()
    bands = dict(DEFAULT_BANDS if bands is None else bands)
    if num_classes < 2:
        raise ArgumentError("need at least 2 classes")
    if any(b < 1 for b in bands.values()) or not bands:
        raise ArgumentError(f"band counts must be >= 1, got {bands}")
    order = _modality_order(bands)
    if n_cells is None:
        n_cells = max(4 * num_classes, height * width // 256)
    t_seed = layout_seed if target_layout_seed is None else target_layout_seed

    sigs = _signatures(layout_seed, num_classes, bands)
    s_truth, s_labels = _layout(layout_seed, height, width, num_classes, n_cells, 0.0,
                                unlabeled_fraction)
    t_truth, t_labels = _layout(t_seed, height, width, num_classes, n_cells, shift.skew,
                                unlabeled_fraction)
    s_img = _render(s_truth, sigs, bands, order, layout_seed, pixel_noise)
    t_img = _render(t_truth, sigs, bands, order, t_seed, pixel_noise)

    params = shift_parameters(shift, bands)
    noise_rng = np.random.default_rng([shift.seed, 43])
    for mid in order:
        gain, offset = params[mid]
        noise = noise_rng.normal(size=t_img[mid].shape)
        t_img[mid] = gain[:, None, None] * t_img[mid] + offset[:, None, None] + shift.noise_std * noise

    names = default_class_names(num_classes)
    source = Scene(f"{name}_source", [RasterStack(m, s_img[m]) for m in order], s_labels,
                   num_classes, 0, names)
    target = Scene(f"{name}_target", [RasterStack(m, t_img[m]) for m in order], t_labels,
                   num_classes, 0, list(names))
    return source, target


def shift_parameters(shift: ShiftSpec, bands: Dict[str, int]) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """Per-band (gain, offset) vectors that ``synth_scene_pair`` applies for ``shift``."""
    rng = np.random.default_rng([shift.seed, 41])
    out = {}
    for mid in _modality_order(bands):
        b = bands[mid]
        out[mid] = (rng.uniform(*shift.gain_range, size=b), rng.uniform(*shift.offset_range, size=b))
    return out


def _modality_order(ids) -> List[str]:
    return [m for m in MODALITY_ORDER if m in ids] + sorted(set(ids) - set(MODALITY_ORDER))
