"""Importance sampling of triangle upper tails in dense Erdos-Renyi graphs."""

__version__ = "0.1.0"
