"""Slim-graph diffusion forecasting engine."""
