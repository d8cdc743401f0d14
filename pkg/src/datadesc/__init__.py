"""datadesc: profile tabular datasets, generate descriptions, evaluate retrieval."""

__version__ = "0.1.0"
