"""Database module for cached reference solutions and run history."""
