"""Excitation transport in open spin networks with ion-chain couplings."""

__version__ = "0.1.0"
