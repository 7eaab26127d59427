"""Deterministic desk-scale simulator of serverless federated multi-task
learning for graph-level classifiers."""

__version__ = "0.1.0"
