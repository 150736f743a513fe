"""Shared fixtures: a synthetic corpus, a small RIR bank, and tiny configs.

Session-scoped so the expensive pieces build once; everything is seeded.
"""

import numpy as np
import pytest

from uxenc import acoustics, mixsim, toydata
from uxenc.encoder import EncoderConfig


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    clean, noise = toydata.write_toy_corpus(
        root, n_speakers=4, utts_per_speaker=4, n_samples=16000, n_noises=3, seed=0)
    return {"root": root, "clean": clean, "noise": noise}


@pytest.fixture(scope="session")
def clean_pool(toy_corpus):
    records = mixsim.read_manifest(toy_corpus["clean"])
    return [mixsim.load_clean_utterance(r) for r in records]


@pytest.fixture(scope="session")
def noise_pool(toy_corpus):
    from uxenc.audio import read_wav

    waves = []
    for rec in mixsim.read_manifest(toy_corpus["noise"]):
        _, wave = read_wav(rec["path"])
        waves.append(wave.astype(np.float64))
    return waves


@pytest.fixture(scope="session")
def rir_bank(tmp_path_factory):
    bank_dir = tmp_path_factory.mktemp("rirs")
    acoustics.generate_rir_bank(bank_dir, seed=7, channel_counts=[2, 3],
                                entries_per_count=4, sources_per_entry=3,
                                max_order=6)
    return acoustics.load_rir_bank(bank_dir)


def tiny_encoder_config(**overrides):
    base = dict(
        conv_spec=((10, 5, 8), (3, 2, 8), (3, 2, 8), (3, 2, 8), (3, 2, 8),
                   (2, 2, 8), (2, 2, 8)),
        model_dim=16,
        n_heads=2,
        n_cross_channel=1,
        n_cross_frame=1,
        ffn_dim=32,
        proj_dim=8,
        n_clusters=8,
        rel_pos_window=4,
    )
    base.update(overrides)
    return EncoderConfig(**base).validate()


@pytest.fixture
def tiny_cfg():
    return tiny_encoder_config()
