"""Tridiagonal renderings of bosonic multi-mode Hamiltonians and
norm-preserving split-operator propagators built on them."""

__version__ = "0.1.0"
