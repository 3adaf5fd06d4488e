"""In-hand object pose tracking with an ensemble of contact-physics simulations."""

__version__ = "0.1.0"
