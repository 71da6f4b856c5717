"""Access-permission flow analysis through linear concurrent constraint programs."""

__version__ = "0.1.0"
