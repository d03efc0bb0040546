"""Camera response function modelling and radiometric calibration toolkit."""

__version__ = "0.1.0"
