"""mesodyn: mesoscopic trajectory generation and spectrally constrained
Onsager dynamics learning."""

__version__ = "0.1.0"
