"""Priority-pruned path reasoning over knowledge graphs."""

__version__ = "0.1.0"
