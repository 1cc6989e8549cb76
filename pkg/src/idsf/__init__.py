"""IDSF: multimodal recommendation with ID embeddings as subtle features
of content and structure."""

from .model import IDSFModel, ModelConfig

__all__ = ["IDSFModel", "ModelConfig"]
__version__ = "0.1.0"
