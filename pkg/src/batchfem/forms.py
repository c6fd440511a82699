"""Analytic (reference-cell) tensors for the supported bilinear forms.

An element matrix factors as ``A[i, j] = sum_{mu,nu} G[mu, nu] * K[i, j, mu, nu]``
where ``K`` depends only on the form and the reference simplex.  ``K`` is stored
flat, one ``dim x dim`` block per matrix entry, blocks ordered by
``Kidx = i + j * KROWS`` (test index fastest), then coefficient index ``k`` for
weighted forms, then ``(mu, nu)`` row-major inside each block.  The byte offset
of block ``Kidx`` is therefore ``Kidx * DIM * DIM`` for unweighted forms.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import ConfigurationError, QuadratureDegreeError
from .reference import HIGH, check_dim, make_quadrature, make_reference_cell, tabulate_p1_basis


class Operator(str, Enum):
    LAPLACIAN = "laplacian"
    ELASTICITY = "elasticity"
    WEIGHTED_LAPLACIAN = "weighted-laplacian"


def check_operator(operator):
    try:
        return Operator(operator)
    except ValueError:
        names = ", ".join(o.value for o in Operator)
        raise ConfigurationError(f"unknown operator {operator!r}; expected one of {names}") from None


@dataclass(frozen=True)
class FormSpec:
    operator: Operator
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "operator", check_operator(self.operator))
        object.__setattr__(self, "dim", check_dim(self.dim))

    @property
    def num_basis_funcs(self):
        return self.dim + 1

    @property
    def num_components(self):
        return self.dim if self.operator is Operator.ELASTICITY else 1

    @property
    def coefficient_arity(self):
        return 1 if self.operator is Operator.WEIGHTED_LAPLACIAN else 0

    @property
    def geometry_arity(self):
        return 2

    @property
    def krows(self):
        return self.num_basis_funcs * self.num_components

    @property
    def num_coefficients(self):
        return self.num_basis_funcs ** self.coefficient_arity

    @property
    def block_size(self):
        return self.dim ** self.geometry_arity


@dataclass(frozen=True, eq=False)
class AnalyticTensor:
    spec: FormSpec
    blocks: np.ndarray

    def block(self, i, j, k=None):
        """The ``dim x dim`` block for test index ``i``, trial index ``j`` (and coefficient ``k``)."""
        spec = self.spec
        kidx = i + j * spec.krows
        if spec.coefficient_arity:
            if k is None:
                raise ValueError("weighted forms need a coefficient index k")
            kidx = kidx * spec.num_coefficients + k
        d = spec.dim
        off = kidx * d * d
        return self.blocks[off:off + d * d].reshape(d, d)

    def as_array(self, dtype=None):
        """Blocks as ``[Kidx, (k,) mu*dim+nu]`` in the requested precision."""
        spec = self.spec
        shape = (spec.krows ** 2, spec.block_size)
        if spec.coefficient_arity:
            shape = (spec.krows ** 2, spec.num_coefficients, spec.block_size)
        out = self.blocks.reshape(shape)
        return out if dtype is None else out.astype(dtype)


def integrate_jet_product(basis, rule, factors):
    """Integrate a product of P1 jets over the reference cell.

    ``factors`` is a sequence of ``"value"`` or ``"grad"``, one per free basis
    index.  The result has one axis per factor (basis index, in order) followed
    by one axis per ``"grad"`` factor (reference derivative direction, in order).
    """
    factors = list(factors)
    if not factors:
        raise ValueError("need at least one factor")
    for f in factors:
        if f not in ("value", "grad"):
            raise ValueError(f"unknown jet factor {f!r}")
    if rule.dim != basis.dim:
        raise ConfigurationError("basis and quadrature rule dimensions differ")
    # P1 gradients are constant, so only value factors carry polynomial degree
    degree = sum(f == "value" for f in factors)
    if rule.degree < degree:
        raise QuadratureDegreeError(
            f"integrand has degree {degree} but rule is only exact to degree {rule.degree}"
        )
    if basis.values.shape[1] != rule.num_points:
        raise ConfigurationError("basis was not tabulated at this rule's points")

    letters = iter("abcdefgh")
    dir_letters = iter("uvwxyz")
    operands, subs, basis_out, dir_out = [], [], [], []
    for f in factors:
        b = next(letters)
        basis_out.append(b)
        if f == "value":
            operands.append(basis.values)
            subs.append(b + "q")
        else:
            d = next(dir_letters)
            dir_out.append(d)
            operands.append(basis.gradients)
            subs.append(b + "q" + d)
    operands.append(np.asarray(rule.weights, dtype=HIGH))
    subs.append("q")
    expr = ",".join(subs) + "->" + "".join(basis_out + dir_out)
    return np.einsum(expr, *operands)


def _flatten(spec, tensor):
    # tensor is [i, j, (k,) mu, nu]; emit i fastest within Kidx
    axes = (1, 0) + tuple(range(2, tensor.ndim))
    flat = np.ascontiguousarray(np.transpose(tensor, axes)).reshape(-1)
    flat = flat.astype(np.float64)
    flat.setflags(write=False)
    return AnalyticTensor(spec, flat)


def _reference_setup(dim, degree):
    cell = make_reference_cell(dim)
    rule = make_quadrature(dim, degree)
    return tabulate_p1_basis(cell, rule), rule


def build_k_laplacian(dim):
    spec = FormSpec(Operator.LAPLACIAN, dim)
    basis, rule = _reference_setup(spec.dim, 1)
    return _flatten(spec, integrate_jet_product(basis, rule, ["grad", "grad"]))


def build_k_elasticity(dim):
    """Vector P1 blocks ``(1/4) delta_cd K_lap[a, b]``, multi-index ``i = a + c * numBasisFuncs``."""
    spec = FormSpec(Operator.ELASTICITY, dim)
    basis, rule = _reference_setup(spec.dim, 1)
    scalar = integrate_jet_product(basis, rule, ["grad", "grad"]) / HIGH(4)
    nb, nc = spec.num_basis_funcs, spec.num_components
    full = np.zeros((nc, nb, nc, nb, spec.dim, spec.dim), dtype=HIGH)
    for c in range(nc):
        full[c, :, c, :] = scalar
    full = full.reshape(spec.krows, spec.krows, spec.dim, spec.dim)
    return _flatten(spec, full)


def build_k_weighted_laplacian(dim):
    spec = FormSpec(Operator.WEIGHTED_LAPLACIAN, dim)
    basis, rule = _reference_setup(spec.dim, 1)
    return _flatten(spec, integrate_jet_product(basis, rule, ["grad", "grad", "value"]))


_BUILDERS = {
    Operator.LAPLACIAN: build_k_laplacian,
    Operator.ELASTICITY: build_k_elasticity,
    Operator.WEIGHTED_LAPLACIAN: build_k_weighted_laplacian,
}


def build_analytic_tensor(spec):
    return _BUILDERS[spec.operator](spec.dim)


def format_k_blocks(K):
    """Plain-text dump: one stanza per block, rows of each ``dim x dim`` block on separate lines."""
    spec = K.spec
    lines = [f"# operator={spec.operator.value} dim={spec.dim} krows={spec.krows}"]
    for j in range(spec.krows):
        for i in range(spec.krows):
            ks = range(spec.num_coefficients) if spec.coefficient_arity else [None]
            for k in ks:
                label = f"block i={i} j={j}" + ("" if k is None else f" k={k}")
                lines.append(label)
                for row in K.block(i, j, k):
                    lines.append(" ".join(repr(float(x)) for x in row))
                lines.append("")
    return "\n".join(lines)
