"""Embedding microservice for text-image alignment scoring."""

from .app import create_app
from .embedders import DEFAULT_MODEL, TINY_MODEL, load_embedder

__version__ = "0.1.0"
__all__ = ["create_app", "load_embedder", "DEFAULT_MODEL", "TINY_MODEL"]
