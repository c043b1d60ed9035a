"""Core simulation package for backseat.

Core holds the event engine, fabric, transports and metrics without any file
or console I/O, so a run is a pure function of its scenario, seed and trace.
"""
