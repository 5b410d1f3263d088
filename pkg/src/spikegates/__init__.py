"""Quantum gates executed by stochastic spiking networks on pbit-encoded qubits."""

__version__ = "0.1.0"
