"""Utility modules for hashing, logging, configuration, and run artifacts."""
