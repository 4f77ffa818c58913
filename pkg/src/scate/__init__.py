"""scate: distill tree ensembles into compact spectral neural surrogates."""

from .cart import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
