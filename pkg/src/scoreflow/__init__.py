"""Score-matching and kernel-flow generator training with discriminator-guided sampling."""

__version__ = "0.1.0"
