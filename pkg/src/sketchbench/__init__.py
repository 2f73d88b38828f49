"""Sparse subspace embeddings, fast embedding pipelines and sketched least squares."""

__version__ = "0.1.0"
