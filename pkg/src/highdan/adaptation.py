"""Feature- and category-level adversarial adaptation.

Least-squares objectives compare sigmoid-squashed discriminator scores with
the domain labels source = 0, target = 1. The feature discriminator keeps the
spatial extent of its input so its scores double as a pixel-wise attention
map for correcting target features: ``v + v * sigmoid(score)``.
"""

from __future__ import annotations

from typing import Sequence, Tuple

import torch
import torch.nn as nn

from .errors import ArgumentError, ConfigError

SOURCE_LABEL = 0.0
TARGET_LABEL = 1.0


class FeatureDiscriminator(nn.Module):
    """Stride-1 3x3 convolutions, leaky ReLU 0.2, one score per feature pixel."""

    kind = "feature"

    def __init__(self, in_channels: int, widths: Sequence[int] = (256, 128, 64)):
        super().__init__()
        self.in_channels = in_channels
        layers = []
        cin = in_channels
        for w in widths:
            layers += [nn.Conv2d(cin, w, 3, padding=1), nn.LeakyReLU(0.2)]
            cin = w
        layers.append(nn.Conv2d(cin, 1, 3, padding=1))
        self.net = nn.Sequential(*layers)

    @property
    def final(self) -> nn.Conv2d:
        return self.net[-1]

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ConfigError(
                f"feature discriminator expects {self.in_channels} channels, got {x.shape[1]}")
        return self.net(x)


class CategoryDiscriminator(nn.Module):
    """4x4 stride-2 convolutions over softmax maps."""

    kind = "category"

    def __init__(self, num_classes: int, widths: Sequence[int] = (64, 128, 256, 512)):
        super().__init__()
        self.in_channels = num_classes
        layers = []
        cin = num_classes
        for w in widths:
            layers += [nn.Conv2d(cin, w, 4, stride=2, padding=1), nn.LeakyReLU(0.2)]
            cin = w
        layers.append(nn.Conv2d(cin, 1, 4, stride=2, padding=1))
        self.net = nn.Sequential(*layers)

    @property
    def final(self) -> nn.Conv2d:
        return self.net[-1]

    def forward(self, p):
        if p.shape[1] != self.in_channels:
            raise ConfigError(
                f"category discriminator expects {self.in_channels} channels, got {p.shape[1]}")
        return self.net(p)


def discriminate(d: nn.Module, m: torch.Tensor) -> torch.Tensor:
    return d(m)


def attention_correct(v: torch.Tensor, scores: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Return ``(v + v * alpha, alpha)`` with ``alpha = sigmoid(scores)`` broadcast over channels."""
    if scores.shape[-2:] != v.shape[-2:]:
        raise ArgumentError(
            f"score extent {tuple(scores.shape[-2:])} differs from feature extent {tuple(v.shape[-2:])}")
    alpha = torch.sigmoid(scores)
    return v + v * alpha, alpha


def lsgan_d_loss(scores_source: torch.Tensor, scores_target: torch.Tensor) -> torch.Tensor:
    if scores_source.numel() == 0 or scores_target.numel() == 0:
        raise ArgumentError("empty score map")
    loss_s = ((torch.sigmoid(scores_source) - SOURCE_LABEL) ** 2).mean()
    loss_t = ((torch.sigmoid(scores_target) - TARGET_LABEL) ** 2).mean()
    return loss_s + loss_t


def lsgan_g_loss(scores_target: torch.Tensor) -> torch.Tensor:
    """Pushes target scores toward the source label."""
    if scores_target.numel() == 0:
        raise ArgumentError("empty score map")
    return ((torch.sigmoid(scores_target) - SOURCE_LABEL) ** 2).mean()
