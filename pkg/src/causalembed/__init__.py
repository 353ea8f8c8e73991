"""Quantum channel composition, signalling structures and spacetime embeddings."""
