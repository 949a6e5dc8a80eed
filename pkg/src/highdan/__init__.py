"""Multimodal cross-domain semantic segmentation with a shared high-resolution
encoder and feature/category-level adversarial adaptation."""

__version__ = "0.1.0"
