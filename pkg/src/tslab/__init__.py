"""Transient-stability laboratory.

Generates power-grid topologies, simulates post-fault rotor-angle dynamics,
encodes trajectories into graph-embedding dynamic features (GEDFs), and
trains/evaluates a supervised-contrastive stability classifier.
"""

__version__ = "0.1.0"
