"""Bridge from video files and lightweight models to the engine's external
interfaces: feature-stream documents and the provider RPC."""

__version__ = "0.1.0"


class AdapterError(Exception):
    """Adapter-level failure: unreadable video, unknown model, bad config."""
