"""nsesum: abstractive summarization with Neural Semantic Encoders."""

__version__ = "0.1.0"
