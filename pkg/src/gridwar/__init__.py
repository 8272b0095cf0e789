"""Grid WAR: per-game, park-adjusted wins above replacement for starting pitchers."""

__version__ = "0.1.0"
