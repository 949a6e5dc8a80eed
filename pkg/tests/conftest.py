import numpy as np
import pytest
import torch

from highdan.raster_store import ShiftSpec, synth_scene_pair
from highdan.trainer import TrainConfig

TOY_BANDS = {"hsi": 8, "msi": 4, "sar": 2}


def toy_config(**overrides):
    """Reduced-width network used throughout the desk-scale tests."""
    base = dict(
        tile_size=64, batch_size=8, epochs=1, stream_widths=[8, 16, 32, 64], head_width=16,
        decoder_widths=[32, 16, 16], feat_disc_widths=[32, 16, 8], cat_disc_widths=[16, 32, 64, 64],
        pca_components=8, lr_segmenter=1e-3, lr_discriminator=1e-3, seed=0,
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def toy_pair():
    shift = ShiftSpec((0.7, 1.3), (-0.2, 0.2), 0.05, 0.0, seed=1)
    return synth_scene_pair(3, shift, 128, 128, bands=TOY_BANDS, num_classes=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
