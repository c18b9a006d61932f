"""Random neural networks (G-networks) for supervised learning."""

__version__ = "0.1.0"
