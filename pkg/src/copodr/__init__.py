"""Copositive reformulations and semidefinite approximations of robust decision-rule problems."""

__version__ = "0.1.0"
