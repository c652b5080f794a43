"""pkcheck: parallel k-induction model checking for an idealized Lustre subset."""

__version__ = "0.1.0"
