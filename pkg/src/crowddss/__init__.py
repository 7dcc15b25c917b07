"""Decision support for worker/task matching in competitive task marketplaces."""

__version__ = "0.1.0"
