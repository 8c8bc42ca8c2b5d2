"""Analytic suction-grasp scoring, scene annotation and benchmark evaluation."""

__version__ = "0.1.0"
