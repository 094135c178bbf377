"""Cluster detection and content correlation over multiple edge streams."""

from streamcorr.edges import TimedEdge

__version__ = "0.1.0"

__all__ = ["TimedEdge", "__version__"]
