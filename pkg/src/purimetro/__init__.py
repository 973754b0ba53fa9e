"""Error-mitigated quantum metrology with probabilistic virtual purification."""

__version__ = "0.1.0"
