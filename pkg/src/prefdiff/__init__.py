"""Preference-guided diffusion over user embeddings for cold-start
cross-domain recommendation."""

__version__ = "0.1.0"
