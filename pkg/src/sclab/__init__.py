"""Synthetic supply-chain transactions and production-function learning."""

__version__ = "0.1.0"
