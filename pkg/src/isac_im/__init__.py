"""Interference management for bistatic integrated sensing and communication.

Blind interference alignment (BIA) for networks where the sensor channel is
static while user channels fade per slot, topological interference
management (TIM) for partially connected networks, the sensor-side TIN and
SIC baselines, exact DoF bookkeeping, and a Monte Carlo harness.
"""

__version__ = "0.1.0"
