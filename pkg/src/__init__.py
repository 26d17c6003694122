"""Triangle-count local limit law toolkit"""

__version__ = "0.1.0"
