"""Domain services: graph learning, diffusion, the forecaster and its training loop."""
