"""Hybrid quantum-fuzzy neural networks, simulated exactly in numpy."""
from .errors import (ConsistencyError, FormatError, HQFNNError, InvalidArgument, InvalidInput,
                     NumericFailure, ParseError, StateError, UnsupportedVersion, WrongCircuitKind)

__version__ = "0.1.0"
