"""Cavity sideband cooling of a levitated nanosphere, and what single gas
molecules hitting it look like in the cavity output light."""

__version__ = "0.1.0"

from .config import SystemConfig, load_config  # noqa: F401
