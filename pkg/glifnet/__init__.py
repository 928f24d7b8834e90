"""Gated LIF spiking neural network kernel, trainer and dynamics lab."""
