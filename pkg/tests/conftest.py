import numpy as np
import pytest

from streamridge.embed_store import EmbeddingDataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, n=40, d=8, num_classes=4, names=False) -> EmbeddingDataset:
    feats = rng.standard_normal((n, d))
    labels = rng.integers(0, num_classes, size=n)
    # make sure every class appears
    labels[:num_classes] = np.arange(num_classes)
    class_names = [f"class-{i}" for i in range(num_classes)] if names else None
    return EmbeddingDataset(features=feats, labels=labels.astype(np.int64),
                            num_classes=num_classes, class_names=class_names)
