"""Quality-Diversity search for self-organizing patterns in multi-channel Lenia."""

__version__ = "0.1.0"
