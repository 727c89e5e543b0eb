"""
Visiting-pattern miner: temporal-distance clustering of binary presence sequences
"""

__version__ = "1.1.0"
