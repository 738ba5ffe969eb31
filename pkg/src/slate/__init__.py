"""Recurrent window-attention autoencoder for MIMO precoder feedback."""

__version__ = "0.1.0"
