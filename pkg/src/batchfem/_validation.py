import numpy as np

from .engine import CoefficientField
from .geometry import Mesh


def check_element_coordinates(X, dim=None):
    """Coerce a Mesh or an ``(n, dim+1, dim)`` array to float64 element coordinates."""
    if isinstance(X, Mesh):
        coords = X.element_coordinates()
    else:
        coords = np.asarray(X, dtype=np.float64)
    if coords.ndim != 3 or coords.shape[1] != coords.shape[2] + 1:
        raise ValueError(
            f"expected element coordinates of shape (n, dim+1, dim), got {coords.shape}"
        )
    if dim is not None and coords.shape[2] != dim:
        raise ValueError(f"expected {dim}D elements, got {coords.shape[2]}D")
    if not np.all(np.isfinite(coords)):
        raise ValueError("element coordinates contain NaN or infinity")
    return coords


def check_coefficients(coefficients, num_elements, num_nodes):
    if coefficients is None:
        return None
    if not isinstance(coefficients, CoefficientField):
        coefficients = CoefficientField(coefficients)
    if coefficients.values.shape != (num_elements, num_nodes):
        raise ValueError(
            f"coefficients have shape {coefficients.values.shape}, "
            f"expected ({num_elements}, {num_nodes})"
        )
    if not np.all(np.isfinite(coefficients.values)):
        raise ValueError("coefficients contain NaN or infinity")
    return coefficients
