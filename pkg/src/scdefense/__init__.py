"""Train, evaluate, compress, and deploy ML noise generators for side-channel obfuscation."""

__version__ = "0.1.0"
