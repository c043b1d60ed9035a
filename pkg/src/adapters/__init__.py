"""Integration adapters for backseat.

Adapters translate between core domain objects and the outside world:
scenario and CDF files, result CSVs, the sweep index and console tables.
"""
