"""API-aware PL/SQL to Java translation pipeline with an offline evaluation harness."""

__version__ = "0.1.0"
