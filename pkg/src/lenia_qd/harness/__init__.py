"""Experiment harness: configuration, QD loop, persistence, exports and CLI."""
