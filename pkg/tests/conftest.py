import io
import json
import shutil
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

ROOT = Path(__file__).resolve().parents[1]
DATA = Path(__file__).resolve().parent / "data"
DEMO = ROOT / "fixtures" / "demo_event"
REFERENCE_CORPUS = ROOT / "fixtures" / "reference_corpus"


def gray_base(h=256, w=256, seed=0):
    """Smooth asymmetric grayscale image, R = G = B."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    img = 90 + 40 * np.sin(xx / 23.0) * np.cos(yy / 31.0) + 0.2 * xx + 0.1 * yy
    img = img + rng.normal(0, 2, size=img.shape)
    g = np.clip(img, 0, 255).astype(np.uint8)
    return np.dstack([g, g, g])


def jpeg_bytes(size=(32, 24), colour=(100, 150, 200), exif=None):
    im = Image.new("RGB", size, colour)
    buf = io.BytesIO()
    kwargs = {"exif": exif.tobytes()} if exif is not None else {}
    im.save(buf, "JPEG", **kwargs)
    return buf.getvalue()


@pytest.fixture
def demo_copy(tmp_path):
    """Writable copy of the shipped demo event."""
    dst = tmp_path / "demo_event"
    shutil.copytree(DEMO, dst)
    return dst


@pytest.fixture(scope="session")
def synthetic_script():
    return json.loads((DEMO / "synthetic.json").read_text())
