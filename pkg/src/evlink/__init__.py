"""Event-stream to colour-image retrieval: simulation, encoding, cross-modal training and ranking."""

__version__ = "0.1.0"
