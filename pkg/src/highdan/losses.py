"""Segmentation losses and the weighted training objective.

Label maps carry class ids with ``ignore_index`` marking unlabeled pixels.
With the default ``ignore_index=0`` class id ``c`` maps to logit channel
``c - 1``; for any other ignore value ids map to channels directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple, Union

import torch
import torch.nn.functional as F

from .errors import ArgumentError, ConfigError, DataError, NumericError

DICE_EPS = 1e-6


@dataclass
class LossWeights:
    lam: float = 0.5   # feature-level adversarial term
    mu: float = 0.5    # category-level adversarial term

    def __post_init__(self):
        if self.lam < 0 or self.mu < 0:
            raise ConfigError(f"loss weights must be non-negative, got lambda={self.lam}, mu={self.mu}",
                              key="weights")


def label_channels(labels: torch.Tensor, num_classes: int, ignore_index: int = 0):
    """Map class ids to channel indices; returns ``(index, valid)`` with index 0 where invalid."""
    labels = labels.long()
    offset = 1 if ignore_index == 0 else 0
    valid = labels != ignore_index
    index = labels - offset
    if valid.any():
        bad = valid & ((index < 0) | (index >= num_classes))
        if bad.any():
            raise DataError(
                f"label value {int(labels[bad][0])} outside the {num_classes}-class range")
    index = torch.where(valid, index, torch.zeros_like(index))
    return index, valid


def _check_extent(maps, labels):
    if maps.shape[0] != labels.shape[0] or maps.shape[-2:] != labels.shape[-2:]:
        raise ArgumentError(f"map shape {tuple(maps.shape)} does not match labels {tuple(labels.shape)}")


def mce_loss(logits: torch.Tensor, labels: torch.Tensor, ignore_index: int = 0,
             return_count: bool = False):
    """Mean cross-entropy over labeled pixels; 0 when nothing is labeled."""
    _check_extent(logits, labels)
    index, valid = label_channels(labels, logits.shape[1], ignore_index)
    n = int(valid.sum())
    if n == 0:
        loss = logits.sum() * 0.0
    else:
        logp = F.log_softmax(logits, dim=1)
        nll = -logp.gather(1, index.unsqueeze(1)).squeeze(1)
        loss = nll[valid].sum() / n
    return (loss, n) if return_count else loss


def dice_loss(probs: torch.Tensor, labels: torch.Tensor, ignore_index: int = 0,
              eps: float = DICE_EPS, mode: str = "macro") -> torch.Tensor:
    """1 - dice over non-ignored pixels.

    ``macro`` averages per-class dice over classes present in the labels;
    ``global`` pools the one-hot sums of all classes into a single ratio.
    """
    _check_extent(probs, labels)
    num_classes = probs.shape[1]
    index, valid = label_channels(labels, num_classes, ignore_index)
    mask = valid.unsqueeze(1).to(probs.dtype)
    onehot = F.one_hot(index, num_classes).permute(0, 3, 1, 2).to(probs.dtype) * mask
    p = probs * mask
    dims = (0, 2, 3)
    inter = (onehot * p).sum(dims)
    sum_y = onehot.sum(dims)
    sum_p = p.sum(dims)
    if mode == "global":
        if not valid.any():
            return probs.sum() * 0.0
        return 1.0 - (2.0 * inter.sum() + eps) / (sum_y.sum() + sum_p.sum() + eps)
    if mode != "macro":
        raise ArgumentError(f"unknown dice mode {mode!r}")
    supported = sum_y > 0
    if not supported.any():
        return probs.sum() * 0.0
    dice = (2.0 * inter + eps) / (sum_y + sum_p + eps)
    return 1.0 - dice[supported].mean()


def seg_loss(logits, labels, ignore_index=0, use_dice=True, dice_mode="macro"):
    """Returns ``(seg, mce, dice)``; dice is 0 when disabled."""
    mce = mce_loss(logits, labels, ignore_index)
    if use_dice:
        dice = dice_loss(torch.softmax(logits, dim=1), labels, ignore_index, mode=dice_mode)
    else:
        dice = torch.zeros((), dtype=logits.dtype)
    return mce + dice, mce, dice


Number = Union[float, torch.Tensor]


def _value(x) -> float:
    return float(x.detach()) if isinstance(x, torch.Tensor) else float(x)


def total_loss(seg: Number, g_feat: Number, g_cat: Number, w: LossWeights) -> Number:
    for name, term in (("seg", seg), ("g_feat", g_feat), ("g_cat", g_cat)):
        if not math.isfinite(_value(term)):
            raise NumericError(f"loss term {name} is not finite ({_value(term)})", term=name)
    return seg + w.lam * g_feat + w.mu * g_cat
