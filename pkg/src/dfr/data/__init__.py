"""Synthetic data, annotation files and preprocessing."""
