"""Covariate-dependent Gaussian graphical models on dyadic partitions."""
