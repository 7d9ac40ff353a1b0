"""MPS simulator for single-photon scattering on an ultrastrongly coupled
qubit in a coupled-cavity waveguide, with exact small-system oracles."""

__version__ = "0.1.0"
