"""Radar-to-gesture toolkit: FMCW simulation, point-cloud DSP, cross-modal
graph autoencoder, and recurrent gesture classification."""

__version__ = "0.1.0"
