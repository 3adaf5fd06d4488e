"""HTTP facade: tracking sessions, recording, and batch experiments."""
from .app import create_app

__all__ = ["create_app"]
