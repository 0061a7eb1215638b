"""Subsequence anomaly detection for univariate time series.

Pipeline: sliding-window extraction with a multi-length view, TCN feature
encoding with learnable length selection, a kNN prior graph over
multi-measure subsequence distances, density-aware adaptive graph message
passing, and distance-based anomaly scoring trained with a hypersphere
classifier objective. Ships with a discord baseline, evaluation metrics,
and a Monte-Carlo validator for the message-passing design.
"""

__version__ = "0.1.0"
