"""steinpaths: exchangeable-pair Gaussian approximation lab for step processes."""

__version__ = "0.1.0"
