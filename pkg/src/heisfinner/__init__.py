"""Finner-type multilinear inequalities on the Heisenberg group, verified at desk scale."""

__version__ = "0.1.0"
