"""Eye-movement parameters from gray images: pupil, gaze and tension."""

__version__ = "0.1.0"
