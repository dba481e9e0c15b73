"""Desk-scale legal-LLM adaptation toolkit."""

__version__ = "0.1.0"
