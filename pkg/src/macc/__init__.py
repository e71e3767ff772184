"""Cross-layer multi-agent congestion control on a native network simulator."""

__version__ = "0.1.0"
