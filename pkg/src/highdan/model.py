"""The assembled segmenter (encoder + decoder) and its two discriminators."""

from __future__ import annotations

from typing import Dict, Optional, Sequence

import torch
import torch.nn as nn

from .adaptation import CategoryDiscriminator, FeatureDiscriminator, attention_correct
from .decoder import Decoder, predict_probs
from .encoder import EncoderConfig, MultimodalEncoder, init_weights, param_breakdown


class HighDAN(nn.Module):
    def __init__(
        self,
        encoder_config: EncoderConfig,
        num_classes: int,
        decoder_widths: Sequence[int] = (256, 128, 64),
        feat_disc_widths: Optional[Sequence[int]] = (256, 128, 64),
        cat_disc_widths: Optional[Sequence[int]] = (64, 128, 256, 512),
    ):
        super().__init__()
        self.num_classes = num_classes
        self.encoder = MultimodalEncoder(encoder_config)
        self.decoder = Decoder(self.encoder.out_channels, num_classes, decoder_widths)
        self.feat_disc = (FeatureDiscriminator(self.encoder.out_channels, feat_disc_widths)
                          if feat_disc_widths is not None else None)
        self.cat_disc = (CategoryDiscriminator(num_classes, cat_disc_widths)
                         if cat_disc_widths is not None else None)

    @property
    def modalities(self):
        return self.encoder.modalities

    def segmenter_parameters(self):
        return list(self.encoder.parameters()) + list(self.decoder.parameters())

    def reset_parameters(self, generator: Optional[torch.Generator] = None):
        init_weights(self, generator)

    def forward(self, inputs: Dict[str, torch.Tensor], correct: bool = False):
        """Segment a batch; ``correct`` applies the attention rule (target-domain batches)."""
        v = self.encoder(inputs)
        a, alpha = v, None
        if correct and self.feat_disc is not None:
            a, alpha = attention_correct(v, self.feat_disc(v))
        logits = self.decoder(a)
        return {"features": v, "aligned": a, "alpha": alpha, "logits": logits}

    def predict(self, inputs, correct=False):
        return predict_probs(self(inputs, correct)["logits"])

    def breakdown(self) -> Dict[str, int]:
        return param_breakdown({
            "heads": self.encoder.heads,
            "hr_stages": self.encoder.hr_stages,
            "decoder": self.decoder,
            "feature_discriminator": self.feat_disc,
            "category_discriminator": self.cat_disc,
        })
