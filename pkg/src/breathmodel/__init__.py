"""Joint generative/discriminative modeling of quasi-periodic breathing signals."""

__version__ = "0.1.0"
