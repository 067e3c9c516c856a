"""Episode-wise safe exploration in linear constrained MDPs and bandits."""

__version__ = "0.1.0"
