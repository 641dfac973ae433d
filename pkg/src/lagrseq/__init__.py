"""Language-guided RL with sample-efficient oracle querying."""

__version__ = "0.1.0"
