import numpy as np
import pytest

from imgrank.config import Config
from imgrank.imaging import Dataset, FeatureVector


def clustered_dataset(n_classes=4, per_class=20, dim=24, spread=0.05, seed=0):
    """Nonnegative feature vectors scattered tightly around one center per class."""
    rng = np.random.default_rng(seed)
    vectors = []
    for c in range(n_classes):
        center = rng.random(dim)
        for i in range(per_class):
            v = np.clip(center + spread * rng.normal(size=dim), 0, None)
            vectors.append(FeatureVector(f"k{c}/{i:03d}", f"k{c}", v))
    return Dataset.from_vectors(vectors)


@pytest.fixture
def small_config():
    return Config(nmf_rank=5, pca_dims=5, nmf_max_iter=200, graph_k=5, n_folds=5, seed=7)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
