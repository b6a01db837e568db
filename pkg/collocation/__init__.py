"""LGL quadrature, collocation operators, NLP transcription, and costate estimation."""
