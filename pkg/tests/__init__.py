"""Test suite for the LGL collocation toolkit."""
