"""Hybrid satellite-terrestrial space-time lattice codes and a coded MIMO link simulator."""

__version__ = "0.1.0"
