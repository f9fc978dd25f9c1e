"""Joint compression, offloading and resource allocation for user/fog/cloud systems."""

__version__ = "0.1.0"
