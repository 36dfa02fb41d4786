"""Trace-driven DRAM simulator with array voltage as a first-class parameter."""
__version__ = "0.1.0"
