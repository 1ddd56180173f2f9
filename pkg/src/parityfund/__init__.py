"""Risk-parity construction and operation of crypto index funds."""
from .exceptions import DataError, ParityError, ValidationError
from .funds import ABGClassifier
from .marketdata import RollingVolatility, load_price_history
from .weights import EqualRiskContribution, MeanVariance, VVVRiskParity

__all__ = [
    "ABGClassifier",
    "DataError",
    "EqualRiskContribution",
    "MeanVariance",
    "ParityError",
    "RollingVolatility",
    "VVVRiskParity",
    "ValidationError",
    "load_price_history",
]
__version__ = "0.1.0"
