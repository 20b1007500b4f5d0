"""Causal-event analysis of finite-dimensional unitary circuits."""
