"""Sixth-order compact Helmholtz solvers with an FFT-type second-order preconditioner."""
