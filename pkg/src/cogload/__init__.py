"""Real-time cognitive-load classification from wearable EEG band powers and R-R intervals."""

__version__ = "0.1.0"

from .labels import BAND_NAMES, N_FEATURES, LoadLabel, Task

__all__ = ["BAND_NAMES", "N_FEATURES", "LoadLabel", "Task", "__version__"]
