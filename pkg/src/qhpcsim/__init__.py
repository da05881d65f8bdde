"""Hybrid quantum-classical HPC scheduling simulator."""
