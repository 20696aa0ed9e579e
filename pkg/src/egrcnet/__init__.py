"""Deep graph clustering with embedding-induced graph refinement."""

__version__ = "0.1.0"
