"""Secure, reusable quality testing of gradient-boosted tree models."""

__version__ = "0.1.0"
