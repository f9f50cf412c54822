"""Scene factorization with phasor resonator networks."""

__version__ = "0.1.0"
