"""Multimodal high-resolution encoder.

Per modality: a stem of two stride-2 3x3 conv blocks and four bottleneck
blocks (modality specific), then three HR stages whose parameters are shared
by every modality, then bilinear upsampling of all streams to the highest
resolution and channel concatenation. Per-modality outputs are concatenated
in the fixed order hsi, msi, sar.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ArgumentError, ConfigError, StateError

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


@dataclass
class EncoderConfig:
    in_channels: Dict[str, int] = field(default_factory=lambda: {"hsi": 30, "msi": 4, "sar": 2})
    head_width: int = 64
    stream_widths: Sequence[int] = (48, 96, 192, 384)
    blocks_per_stage: int = 4
    head_blocks: int = 4

    def __post_init__(self):
        self.stream_widths = tuple(int(w) for w in self.stream_widths)
        if not self.in_channels:
            raise ConfigError("encoder needs at least one modality", key="in_channels")
        if not self.stream_widths:
            raise ConfigError("stream_widths must not be empty", key="stream_widths")
        for a, b in zip(self.stream_widths, self.stream_widths[1:]):
            if b != 2 * a:
                raise ConfigError(f"stream widths must double, got {self.stream_widths}",
                                  key="stream_widths")
        if min(self.in_channels.values()) < 1:
            raise ConfigError("modality channel counts must be >= 1", key="in_channels")

    @property
    def stages(self) -> int:
        return len(self.stream_widths) - 1

    @property
    def bottleneck_width(self) -> int:
        return self.stream_widths[0]

    @property
    def fused_width(self) -> int:
        return sum(self.stream_widths)

    @property
    def modalities(self) -> List[str]:
        return ordered_modalities(self.in_channels)


def ordered_modalities(ids) -> List[str]:
    fixed = ("hsi", "msi", "sar")
    return [m for m in fixed if m in ids] + sorted(set(ids) - set(fixed))


def bn(channels):
    return nn.BatchNorm2d(channels, eps=BN_EPS, momentum=BN_MOMENTUM)


def conv_bn_relu(cin, cout, stride=1):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False),
        bn(cout),
        nn.ReLU(inplace=False),
    )


class Bottleneck(nn.Module):
    """1x1 conv, BN, 3x3 conv, BN, 1x1 conv, BN, residual add, ReLU."""

    def __init__(self, cin, mid, cout):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, mid, 1, bias=False)
        self.bn1 = bn(mid)
        self.conv2 = nn.Conv2d(mid, mid, 3, padding=1, bias=False)
        self.bn2 = bn(mid)
        self.conv3 = nn.Conv2d(mid, cout, 1, bias=False)
        self.bn3 = bn(cout)
        self.shortcut = None
        if cin != cout:
            self.shortcut = nn.Sequential(nn.Conv2d(cin, cout, 1, bias=False), bn(cout))

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = F.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        identity = x if self.shortcut is None else self.shortcut(x)
        return F.relu(out + identity)


class BasicBlock(nn.Module):
    def __init__(self, width):
        super().__init__()
        self.conv1 = nn.Conv2d(width, width, 3, padding=1, bias=False)
        self.bn1 = bn(width)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1, bias=False)
        self.bn2 = bn(width)

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + x)


class Head(nn.Module):
    """Modality-specific feature extraction head: stem to 1/4 resolution plus bottlenecks."""

    def __init__(self, in_channels, head_width=64, out_width=48, blocks=4):
        super().__init__()
        self.in_channels = in_channels
        self.stem = nn.Sequential(
            conv_bn_relu(in_channels, head_width, stride=2),
            conv_bn_relu(head_width, head_width, stride=2),
        )
        layers = []
        cin = head_width
        for _ in range(blocks):
            layers.append(Bottleneck(cin, head_width, out_width))
            cin = out_width
        self.bottlenecks = nn.Sequential(*layers)
        self.out_width = out_width if blocks else head_width

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ConfigError(f"head expects {self.in_channels} channels, got {x.shape[1]}")
        if x.shape[-1] % 4 or x.shape[-2] % 4:
            raise ArgumentError(f"spatial extent {tuple(x.shape[-2:])} is not a multiple of 4")
        return self.bottlenecks(self.stem(x))


class FuseLayer(nn.Module):
    """Exchange unit: every output stream is the ReLU'd sum over all input streams.

    same resolution: identity; lower -> higher: 1x1 conv + BN, bilinear upsample;
    higher -> lower: chain of stride-2 3x3 convs (BN+ReLU between links, BN at the end).
    """

    def __init__(self, widths):
        super().__init__()
        self.widths = list(widths)
        n = len(widths)
        self.paths = nn.ModuleList()
        for j in range(n):
            row = nn.ModuleList()
            for i in range(n):
                if i == j:
                    row.append(nn.Identity())
                elif i > j:
                    row.append(nn.Sequential(nn.Conv2d(widths[i], widths[j], 1, bias=False),
                                             bn(widths[j])))
                else:
                    links = []
                    for step in range(j - i):
                        last = step == j - i - 1
                        cout = widths[j] if last else widths[i]
                        links.append(nn.Conv2d(widths[i], cout, 3, stride=2, padding=1, bias=False))
                        links.append(bn(cout))
                        if not last:
                            links.append(nn.ReLU(inplace=False))
                    row.append(nn.Sequential(*links))
            self.paths.append(row)

    def forward(self, xs):
        out = []
        for j, row in enumerate(self.paths):
            size = xs[j].shape[-2:]
            acc = None
            for i, path in enumerate(row):
                y = path(xs[i])
                if i > j:
                    y = F.interpolate(y, size=size, mode="bilinear", align_corners=False)
                acc = y if acc is None else acc + y
            out.append(F.relu(acc))
        return out


class HRStage(nn.Module):
    """Blocks on each existing stream, a new half-resolution stream, then fusion."""

    def __init__(self, stage_index, stream_widths, blocks=4):
        super().__init__()
        self.stage_index = stage_index
        widths = list(stream_widths[:stage_index])
        new_width = stream_widths[stage_index]
        self.branches = nn.ModuleList(
            nn.Sequential(*[BasicBlock(w) for _ in range(blocks)]) for w in widths)
        self.transition = conv_bn_relu(widths[-1], new_width, stride=2)
        self.fuse = FuseLayer(widths + [new_width])

    def forward(self, pyramid: List[torch.Tensor]) -> List[torch.Tensor]:
        if len(pyramid) != self.stage_index:
            raise StateError(
                f"stage {self.stage_index} expects {self.stage_index} streams, got {len(pyramid)}")
        xs = [branch(x) for branch, x in zip(self.branches, pyramid)]
        xs.append(self.transition(xs[-1]))
        return self.fuse(xs)


def pyramid_fuse(pyramid: List[torch.Tensor]) -> torch.Tensor:
    """Upsample every stream to the first stream's resolution and stack along channels."""
    if not pyramid:
        raise ArgumentError("empty pyramid")
    size = pyramid[0].shape[-2:]
    ups = [pyramid[0]] + [F.interpolate(x, size=size, mode="bilinear", align_corners=False)
                          for x in pyramid[1:]]
    return ups[0] if len(ups) == 1 else torch.cat(ups, dim=1)


class MultimodalEncoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.modalities = config.modalities
        self.heads = nn.ModuleDict({
            m: Head(config.in_channels[m], config.head_width, config.bottleneck_width,
                    config.head_blocks)
            for m in self.modalities
        })
        # one set of HR stages, used by every modality
        self.hr_stages = nn.ModuleList(
            HRStage(s, config.stream_widths, config.blocks_per_stage)
            for s in range(1, config.stages + 1))

    @property
    def out_channels(self) -> int:
        return self.config.fused_width * len(self.modalities)

    def pyramid(self, modality: str, x: torch.Tensor) -> List[torch.Tensor]:
        pyramid = [self.heads[modality](x)]
        for stage in self.hr_stages:
            pyramid = stage(pyramid)
        return pyramid

    def encode_modality(self, modality: str, x: torch.Tensor) -> torch.Tensor:
        return pyramid_fuse(self.pyramid(modality, x))

    def forward(self, inputs: Dict[str, torch.Tensor], return_per_modality=False):
        missing = [m for m in self.modalities if m not in inputs]
        if missing:
            raise ArgumentError(f"missing modalities: {missing}")
        per = [self.encode_modality(m, inputs[m]) for m in self.modalities]
        fused = torch.cat(per, dim=1) if len(per) > 1 else per[0]
        if return_per_modality:
            return fused, dict(zip(self.modalities, per))
        return fused


def init_weights(module: nn.Module, generator: Optional[torch.Generator] = None):
    """Fan-in scaled normal kernels, zero biases, BN scale 1 / shift 0."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu",
                                    generator=generator)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def count_params(module: Optional[nn.Module]) -> int:
    if module is None:
        return 0
    return sum(p.numel() for p in module.parameters())


def param_breakdown(modules: Dict[str, Optional[nn.Module]]) -> Dict[str, int]:
    report = {name: count_params(m) for name, m in modules.items() if m is not None}
    report["total"] = sum(report.values())
    return report
