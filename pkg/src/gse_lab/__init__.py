"""Generalized Shannon's Entropy toolkit."""
