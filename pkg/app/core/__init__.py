"""Numerical substrate: tensors, entmax, allocation accounting and settings."""
