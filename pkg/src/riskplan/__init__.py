"""Online risk-constrained planning on finite MDPs."""

__version__ = "0.1.0"
