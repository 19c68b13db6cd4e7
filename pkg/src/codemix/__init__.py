"""codemix: a desk-scale code-mix query translation laboratory."""

__version__ = "0.1.0"
