"""spdwave - wavelet smoothing and confidence sets for SPD matrix curves."""

__version__ = "0.1.0"
