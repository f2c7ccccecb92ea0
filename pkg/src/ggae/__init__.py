"""Trade-flow prediction as edge-weight regression on a country graph."""

__version__ = "0.1.0"
