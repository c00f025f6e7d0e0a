"""Embedding backends behind the service.

Two families:

* ``builtin-tiny`` — a dependency-free deterministic embedder that places
  texts and images in a shared feature space built from a small color
  palette plus hashed word features. It exists so the full pipeline and its
  tests can run hermetically; alignment signal comes from color words
  matching dominant image colors.
* contrastive vision-language checkpoints (the default) — loaded through
  ``transformers`` when the weights are available; embeddings are the
  model's text/image features, L2-normalized.

Every backend returns unit-norm vectors of a constant dimension and is
safe for concurrent calls once constructed.
"""

from __future__ import annotations

import hashlib
import io

import numpy as np
from PIL import Image

DEFAULT_MODEL = "ViT-L/14@336px"
TINY_MODEL = "builtin-tiny"

# Known checkpoint aliases -> hub ids.
_CHECKPOINT_ALIASES = {
    "ViT-L/14@336px": "openai/clip-vit-large-patch14-336",
    "ViT-L/14": "openai/clip-vit-large-patch14",
    "ViT-B/32": "openai/clip-vit-base-patch32",
}


class ModelLoadError(RuntimeError):
    """The configured checkpoint could not be loaded."""


# ---------------------------------------------------------------------------
# Tiny deterministic embedder


_PALETTE = {
    "red": (220, 40, 40),
    "green": (40, 170, 60),
    "blue": (40, 80, 220),
    "yellow": (240, 220, 60),
    "orange": (240, 150, 40),
    "purple": (150, 60, 200),
    "pink": (240, 140, 190),
    "brown": (140, 90, 50),
    "black": (20, 20, 20),
    "white": (245, 245, 245),
    "gray": (128, 128, 128),
    "cyan": (60, 200, 220),
}
_COLOR_NAMES = tuple(_PALETTE)
_COLOR_SYNONYMS = {"grey": "gray", "violet": "purple", "crimson": "red"}

_N_COLORS = len(_COLOR_NAMES)
_N_HASH = 51
_BIAS_DIM = _N_COLORS + _N_HASH  # reserved so degenerate inputs stay unit-norm
_TINY_DIM = _N_COLORS + _N_HASH + 1

_COLOR_SIGMA = 80.0


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec = vec.copy()
        vec[_BIAS_DIM] = 1.0
        return vec
    return vec / norm


class TinyMultimodalEmbedder:
    """Shared color-and-token feature space for texts and images."""

    model_id = TINY_MODEL
    dim = _TINY_DIM

    def embed_texts(self, texts: list[str]) -> list[list[float]]:
        return [self._embed_text(t).tolist() for t in texts]

    def embed_images(self, images: list[bytes]) -> list[list[float]]:
        return [self._embed_image(b).tolist() for b in images]

    def _embed_text(self, text: str) -> np.ndarray:
        vec = np.zeros(_TINY_DIM)
        tokens = [
            "".join(ch for ch in word.lower() if ch.isalnum())
            for word in text.split()
        ]
        for token in tokens:
            if not token:
                continue
            token = _COLOR_SYNONYMS.get(token, token)
            if token in _PALETTE:
                vec[_COLOR_NAMES.index(token)] += 1.0
            else:
                digest = hashlib.sha256(token.encode("utf-8")).digest()
                slot = _N_COLORS + digest[0] % _N_HASH
                sign = 1.0 if digest[1] % 2 == 0 else -1.0
                # words carry less weight than color evidence
                vec[slot] += 0.25 * sign
        return _normalize(vec)

    def _embed_image(self, data: bytes) -> np.ndarray:
        img = Image.open(io.BytesIO(data)).convert("RGB")
        img.thumbnail((24, 24))
        pixels = np.asarray(img, dtype=np.float64).reshape(-1, 3)
        anchors = np.asarray([_PALETTE[name] for name in _COLOR_NAMES], dtype=np.float64)
        # soft assignment of every pixel to the palette anchors
        dist2 = ((pixels[:, None, :] - anchors[None, :, :]) ** 2).sum(axis=2)
        weights = np.exp(-dist2 / (2.0 * _COLOR_SIGMA ** 2))
        vec = np.zeros(_TINY_DIM)
        vec[:_N_COLORS] = weights.sum(axis=0)
        return _normalize(vec)


# ---------------------------------------------------------------------------
# Contrastive checkpoint backend


class CheckpointEmbedder:
    """Text/image features from a contrastive vision-language checkpoint."""

    def __init__(self, model_name: str):
        hub_id = _CHECKPOINT_ALIASES.get(model_name, model_name)
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ModelLoadError(
                f"checkpoint {model_name!r} needs the optional [clip] extras: {exc}"
            ) from exc
        try:
            self._model = CLIPModel.from_pretrained(hub_id)
            self._processor = CLIPProcessor.from_pretrained(hub_id)
        except Exception as exc:
            raise ModelLoadError(f"could not load checkpoint {hub_id!r}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self.model_id = model_name
        self.dim = int(self._model.config.projection_dim)

    def embed_texts(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            return []
        with self._torch.no_grad():
            inputs = self._processor(
                text=texts, return_tensors="pt", padding=True, truncation=True
            )
            feats = self._model.get_text_features(**inputs)
            feats = feats / feats.norm(dim=-1, keepdim=True)
        return feats.cpu().numpy().tolist()

    def embed_images(self, images: list[bytes]) -> list[list[float]]:
        if not images:
            return []
        pils = [Image.open(io.BytesIO(b)).convert("RGB") for b in images]
        with self._torch.no_grad():
            inputs = self._processor(images=pils, return_tensors="pt")
            feats = self._model.get_image_features(**inputs)
            feats = feats / feats.norm(dim=-1, keepdim=True)
        return feats.cpu().numpy().tolist()


def load_embedder(model_name: str):
    if model_name == TINY_MODEL:
        return TinyMultimodalEmbedder()
    return CheckpointEmbedder(model_name)
