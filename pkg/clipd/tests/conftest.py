import base64
import io

import pytest
from PIL import Image, ImageDraw
from fastapi.testclient import TestClient

from clipd.app import create_app


@pytest.fixture(scope="session")
def client():
    app = create_app(model_name="builtin-tiny")
    with TestClient(app) as tc:
        yield tc


def color_image(rgb, size=64, accent=None):
    """Mostly-solid PNG with an optional accent block, as raw bytes."""
    img = Image.new("RGB", (size, size), rgb)
    if accent is not None:
        draw = ImageDraw.Draw(img)
        draw.rectangle([size // 3, size // 3, 2 * size // 3, 2 * size // 3], fill=accent)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")
