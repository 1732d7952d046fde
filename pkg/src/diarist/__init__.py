"""Purpose-of-writing extraction, annotation, evaluation and clustering for
diary-style corpora."""

__version__ = "0.1.0"
