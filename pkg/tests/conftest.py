import numpy as np
import pytest
from vseg.run_config import DataConfig, InferenceConfig, OptimConfig, RunConfig, TrainerConfig
from vseg.synth import SynthSpec, synth_generate
from vseg.unet import UNetConfig
from vseg.volume import LabeledVolume, Volume


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_unet_config() -> UNetConfig:
    return UNetConfig(levels=2, base_channels=4)


@pytest.fixture
def make_labeled():
    """Factory for small labelled u8 volumes with a cubic defect"""
    def make(dims=(8, 8, 8), defect=((2, 5), (2, 5), (2, 5)), image_dtype=np.uint8) -> LabeledVolume:
        mask = np.zeros(dims, dtype=np.uint8)
        mask[tuple(slice(a, b) for a, b in defect)] = 1
        image = np.where(mask == 1, 40, 200).astype(image_dtype)
        return LabeledVolume(Volume(image), Volume(mask))
    return make


@pytest.fixture
def small_synth() -> LabeledVolume:
    return synth_generate(SynthSpec(dims=(16, 16, 16), target_porosity=0.08, radius_range=(2.0, 3.0), seed=3))


@pytest.fixture
def tiny_run_config(tiny_unet_config) -> RunConfig:
    return RunConfig(
        seed=5,
        model=tiny_unet_config,
        optim=OptimConfig(initial_lr=0.01, milestones=(100,), total_iters=3, patch=(8, 8, 8)),
        data=DataConfig(),
        inference=InferenceConfig(patch=(8, 8, 8), stride=(4, 4, 4)),
        trainer=TrainerConfig(eval_every=2, log_every=1),
    )
