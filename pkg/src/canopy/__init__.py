"""Cross-video indexing and question answering over person-anchored trees."""

__version__ = "0.1.0"
