"""Two-body quantum system simulation, labelling and image encoding pipeline."""

__version__ = "0.1.0"
