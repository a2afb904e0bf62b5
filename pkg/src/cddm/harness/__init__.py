"""Experiment configuration, Monte Carlo runner and command-line interface."""
