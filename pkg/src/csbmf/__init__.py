"""Recovery of actuator activations from a single mixed periodic signal."""
__version__ = "0.1.0"
