import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def image_workspace(tmp_path):
    """A tiny image directory plus a matching manifest CSV."""
    images = tmp_path / "images"
    images.mkdir()
    rng = np.random.default_rng(0)
    rows = ["id,split,label,caption,path"]
    for i in range(5):
        name = f"img_{i}.png"
        pixels = rng.integers(0, 255, size=(40, 40, 3), dtype=np.uint8)
        Image.fromarray(pixels, "RGB").save(images / name)
        rows.append(f"im{i},train,drawing,,{name}")
    manifest = tmp_path / "manifest.csv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return tmp_path, images, manifest
