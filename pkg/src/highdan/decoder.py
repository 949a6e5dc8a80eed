from __future__ import annotations

from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoder import conv_bn_relu
from .errors import ConfigError


class Decoder(nn.Module):
    """Three conv-BN-ReLU blocks, one bilinear 2x after the first, a stride-2
    transposed conv, and a 1x1 classifier: 1/4-resolution features to full-size logits."""

    def __init__(self, in_channels: int, num_classes: int, widths: Sequence[int] = (256, 128, 64)):
        super().__init__()
        if len(widths) != 3:
            raise ConfigError(f"decoder needs 3 block widths, got {list(widths)}", key="decoder_widths")
        self.in_channels = in_channels
        self.num_classes = num_classes
        w1, w2, w3 = widths
        self.block1 = conv_bn_relu(in_channels, w1)
        self.block2 = conv_bn_relu(w1, w2)
        self.block3 = conv_bn_relu(w2, w3)
        self.up = nn.ConvTranspose2d(w3, w3, kernel_size=4, stride=2, padding=1)
        self.classifier = nn.Conv2d(w3, num_classes, 1)

    def forward(self, a):
        if a.shape[1] != self.in_channels:
            raise ConfigError(f"decoder expects {self.in_channels} channels, got {a.shape[1]}")
        x = self.block1(a)
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = self.block3(self.block2(x))
        return self.classifier(self.up(x))


def decode(decoder: Decoder, a: torch.Tensor) -> torch.Tensor:
    return decoder(a)


def predict_probs(logits: torch.Tensor) -> torch.Tensor:
    """Softmax over the class axis (dim 1); max-subtracted, so large logits do not overflow."""
    return torch.softmax(logits, dim=1)
