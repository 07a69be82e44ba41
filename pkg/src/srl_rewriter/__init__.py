"""SRL-guided multi-turn dialogue rewriting at desk scale."""

__version__ = "0.1.0"
