"""Desk-scale simulation, control and reinforcement-learning toolkit for an
eight-thruster underwater vehicle's attitude loop."""

__version__ = "0.1.0"
