"""Two-BO surrogate-assisted evolutionary search over tabular benchmarks."""

__version__ = "0.1.0"
