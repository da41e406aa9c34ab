"""Floquet band structure and Birman-Schwinger eigenvalue search."""
