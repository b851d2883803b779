import numpy as np
import pytest

from otenhance.simulate import DegradationSpec, SynthSpec, build_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_image(rng, channels=1, height=32, width=32):
    return rng.random((channels, height, width)).astype(np.float32)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Tiny labeled corpus shared by pairing/training/evaluation tests:
    3 images per grade at 64x64 plus degraded copies."""
    root = tmp_path_factory.mktemp("corpus")
    manifest = build_corpus(
        3, root, template=SynthSpec(side=64, seed=11), degradation=DegradationSpec(seed=11)
    )
    return manifest


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Minimal 32x32 corpus for fast trainer tests: 2 images per grade."""
    root = tmp_path_factory.mktemp("tiny_corpus")
    manifest = build_corpus(
        2, root, template=SynthSpec(side=32, seed=5), degradation=DegradationSpec(seed=5)
    )
    return manifest


@pytest.fixture(scope="session")
def eval_corpus(tmp_path_factory):
    """Corpus with enough images per class to train and validate the small
    quality classifier: 8 per grade at 64x64."""
    root = tmp_path_factory.mktemp("eval_corpus")
    manifest = build_corpus(
        8, root, template=SynthSpec(side=64, seed=23), degradation=DegradationSpec(seed=23)
    )
    return manifest
