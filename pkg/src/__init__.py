"""L-TAE toolkit - lightweight temporal attention encoders for time-series classification."""

__version__ = "0.1.0"
