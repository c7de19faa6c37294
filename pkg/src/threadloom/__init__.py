"""Graph-based dialogue disentanglement with easy-first decoding."""

__version__ = "0.1.0"
