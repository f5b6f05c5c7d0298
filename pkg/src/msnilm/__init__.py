"""Multi-scale dilated residual network for load disaggregation."""

__version__ = "0.1.0"
