"""entroute: planning and validation toolkit for entanglement distribution."""

__version__ = "0.1.0"
