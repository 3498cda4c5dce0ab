"""Windowed autoencoder surrogate models for evolutionary PDEs."""
