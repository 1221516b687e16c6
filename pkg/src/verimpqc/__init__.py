"""Verifiable multiparty delegated quantum computation, simulated on a laptop."""

__version__ = "0.1.0"
