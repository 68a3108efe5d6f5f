from .config import InterferenceMode, NetworkConfig, OmaConfig, PhiMode

__all__ = ["InterferenceMode", "NetworkConfig", "OmaConfig", "PhiMode"]
