"""Numerical laboratory for isotropic log-concave measures."""
