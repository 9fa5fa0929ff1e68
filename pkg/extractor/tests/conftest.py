import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def image_folder(tmp_path_factory):
    """Tiny ImageFolder tree: 3 classes x 4 images of class-tinted noise."""
    root = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(0)
    for cls, name in enumerate(["ant", "bee", "cat"]):
        d = root / name
        d.mkdir()
        for i in range(4):
            arr = rng.integers(0, 80, size=(48, 48, 3), dtype=np.uint8)
            arr[..., cls] += 120  # tint per class
            Image.fromarray(arr).save(d / f"img{i}.png")
    return root
