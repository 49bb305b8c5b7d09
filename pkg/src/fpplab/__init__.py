"""First passage percolation on the complete graph and its branching-process picture."""

__version__ = "0.1.0"
