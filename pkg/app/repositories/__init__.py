"""Repositories package: dataset CSV files and model checkpoints."""
