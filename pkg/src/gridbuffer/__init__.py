"""Carbon-aware control and trace-driven simulation for battery-buffered edge inference."""

__version__ = "0.1.0"
