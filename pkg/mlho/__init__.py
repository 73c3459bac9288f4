"""Machine-learning pipeline for high-throughput outcome prediction
from longitudinal coded clinical records."""

__version__ = "0.1.0"
