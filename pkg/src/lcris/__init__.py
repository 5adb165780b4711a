"""Simulator and DDPG phase controller for a liquid-crystal RIS mmWave downlink."""

__version__ = "0.1.0"
