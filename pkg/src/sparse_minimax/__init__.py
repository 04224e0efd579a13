"""Rate benchmarks for sparse nonparametric regression with deep ReLU and linear estimators."""

__version__ = "0.1.0"
