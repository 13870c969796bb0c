"""Powered-descent guidance laboratory.

3-DOF Mars and asteroid landing environments, a classical energy-optimal
guidance baseline, recurrent-policy reinforcement learning from scratch,
sensor-based observation models, and a Monte Carlo evaluation harness.
"""

__version__ = "0.1.0"
