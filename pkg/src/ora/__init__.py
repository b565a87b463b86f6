"""Open-set road anomaly detection from lidar and camera."""

__version__ = "0.1.0"
