"""medas: desk-scale image-analysis pipelines, scheduling, and hyper-parameter search."""

__version__ = "0.1.0"
