"""Decentralized adversarial training over graphs."""
__version__ = "0.1.0"
