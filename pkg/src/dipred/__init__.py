"""dipred: dynamic-image video summaries, recurrent forecasting of future
dynamic images, and action-anticipation metrics, all on numpy."""

__version__ = "0.1.0"
