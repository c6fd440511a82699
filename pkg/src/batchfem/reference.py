"""Reference simplices, quadrature rules and P1 basis tabulation.

Everything here is computed in ``numpy.longdouble`` and frozen; callers cast
to their working precision once.
"""
from dataclasses import dataclass
from math import factorial

import numpy as np

from .exceptions import ConfigurationError, QuadratureDegreeError

HIGH = np.longdouble
SUPPORTED_DIMS = (2, 3)
MAX_QUADRATURE_DEGREE = 3


def _frozen(a):
    a = np.array(a, dtype=HIGH)
    a.setflags(write=False)
    return a


def _q(num, den):
    return HIGH(num) / HIGH(den)


def check_dim(dim):
    if dim not in SUPPORTED_DIMS:
        raise ConfigurationError(f"unsupported dimension {dim!r}; expected 2 or 3")
    return int(dim)


@dataclass(frozen=True, eq=False)
class ReferenceCell:
    dim: int
    vertices: np.ndarray
    volume: HIGH


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    dim: int
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def num_points(self):
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class TabulatedBasis:
    """Values ``[function, point]`` and reference gradients ``[function, point, dim]``."""

    dim: int
    values: np.ndarray
    gradients: np.ndarray

    @property
    def num_basis_funcs(self):
        return self.values.shape[0]


def make_reference_cell(dim):
    dim = check_dim(dim)
    vertices = np.vstack([np.zeros(dim, dtype=HIGH), np.eye(dim, dtype=HIGH)])
    return ReferenceCell(dim, _frozen(vertices), HIGH(1) / HIGH(factorial(dim)))


def _symmetric_rules(dim):
    # degree -> (points, weights); weights are in reference-measure units
    if dim == 2:
        third, sixth = _q(1, 3), _q(1, 6)
        return {
            1: ([[third, third]], [_q(1, 2)]),
            2: ([[sixth, sixth], [_q(2, 3), sixth], [sixth, _q(2, 3)]], [sixth] * 3),
            # Strang-Fix: exact rationals, one negative weight at the centroid
            3: (
                [[third, third], [_q(1, 5), _q(1, 5)], [_q(3, 5), _q(1, 5)], [_q(1, 5), _q(3, 5)]],
                [_q(-27, 96)] + [_q(25, 96)] * 3,
            ),
        }
    quarter, sixth, half = _q(1, 4), _q(1, 6), _q(1, 2)
    root5 = np.sqrt(HIGH(5))
    a = (HIGH(5) - root5) / HIGH(20)
    b = (HIGH(5) + HIGH(3) * root5) / HIGH(20)
    return {
        1: ([[quarter] * 3], [sixth]),
        2: ([[a, a, a], [b, a, a], [a, b, a], [a, a, b]], [_q(1, 24)] * 4),
        # Keast: centroid weight -4/5 of the volume
        3: (
            [[quarter] * 3, [sixth] * 3, [half, sixth, sixth], [sixth, half, sixth], [sixth, sixth, half]],
            [_q(-2, 15)] + [_q(3, 40)] * 4,
        ),
    }


def make_quadrature(dim, degree):
    """Smallest built-in symmetric rule that is exact up to ``degree``."""
    dim = check_dim(dim)
    if int(degree) != degree or degree < 1:
        raise QuadratureDegreeError(f"quadrature degree must be a positive integer, got {degree!r}")
    if degree > MAX_QUADRATURE_DEGREE:
        raise QuadratureDegreeError(
            f"no built-in rule of degree {degree} (maximum {MAX_QUADRATURE_DEGREE})"
        )
    points, weights = _symmetric_rules(dim)[int(degree)]
    return QuadratureRule(dim, _frozen(points), _frozen(weights), int(degree))


def p1_values(points):
    """Barycentric P1 values at ``points`` (shape ``[npts, dim]``), returned as ``[dim+1, npts]``."""
    points = np.asarray(points, dtype=HIGH)
    return np.vstack([HIGH(1) - points.sum(axis=1), points.T])


def p1_reference_gradients(dim):
    grads = np.vstack([-np.ones(dim, dtype=HIGH), np.eye(dim, dtype=HIGH)])
    return grads


def tabulate_p1_at(dim, points):
    dim = check_dim(dim)
    points = np.asarray(points, dtype=HIGH).reshape(-1, dim)
    npts = points.shape[0]
    grads = np.repeat(p1_reference_gradients(dim)[:, None, :], npts, axis=1)
    return TabulatedBasis(dim, _frozen(p1_values(points)), _frozen(grads))


def tabulate_p1_basis(cell, rule):
    if cell.dim != rule.dim:
        raise ConfigurationError(
            f"quadrature rule is {rule.dim}D but reference cell is {cell.dim}D"
        )
    return tabulate_p1_at(cell.dim, rule.points)

