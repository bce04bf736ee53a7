"""Equilibrium selection in replicator dynamics with adaptive-gain feedback."""
