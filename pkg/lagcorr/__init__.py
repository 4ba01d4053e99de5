"""
Lagged correlation between environmental variables and daily case counts, and the
regression models trained on the correlation peaks.
"""
__version__ = "1.0.0"
