"""asknav: part-time intervention for grid point-goal navigation."""

__version__ = "0.1.0"
