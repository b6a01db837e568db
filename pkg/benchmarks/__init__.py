"""Benchmark problems, error metrics, and the experiment drivers."""
