"""Direct-quadrature element integration used as ground truth.

Nothing here touches analytic tensors or geometry tensors: integrands are
evaluated in physical space at each quadrature point, with physical gradients
obtained as ``Jinv^T @ reference_gradient``.  Deliberately unoptimized.
"""
from dataclasses import dataclass

import numpy as np

from .forms import FormSpec, Operator
from .geometry import jacobians
from .reference import make_quadrature, make_reference_cell, tabulate_p1_basis

SCALE_FLOOR = 1e-14

_ORACLE_DEGREE = {
    Operator.LAPLACIAN: 2,
    Operator.ELASTICITY: 2,
    Operator.WEIGHTED_LAPLACIAN: 3,
}


def _oracle_tables(spec):
    rule = make_quadrature(spec.dim, _ORACLE_DEGREE[spec.operator])
    basis = tabulate_p1_basis(make_reference_cell(spec.dim), rule)
    return (
        np.asarray(rule.weights, dtype=np.float64),
        np.asarray(basis.values, dtype=np.float64),
        np.asarray(basis.gradients, dtype=np.float64),
    )


def assemble_element_direct(spec, vertices, w=None, _tables=None):
    """Element matrix of one simplex with vertex coordinates ``vertices`` (``(dim+1, dim)``)."""
    vertices = np.asarray(vertices, dtype=np.float64)
    _, Jinv, det = jacobians(vertices[None])
    Jinv, detJ = Jinv[0], det[0]
    weights, values, ref_grads = _tables or _oracle_tables(spec)
    nb, kr = spec.num_basis_funcs, spec.krows
    if spec.coefficient_arity:
        if w is None:
            raise ValueError("weighted operator needs nodal coefficient values")
        w = np.asarray(w, dtype=np.float64)

    A = np.zeros((kr, kr))
    for q, wq in enumerate(weights):
        # rows: basis functions, columns: physical x-derivatives
        grads = ref_grads[:, q, :] @ Jinv
        scale = wq * detJ
        if spec.operator is Operator.LAPLACIAN:
            A += scale * (grads @ grads.T)
        elif spec.operator is Operator.WEIGHTED_LAPLACIAN:
            wval = float(w @ values[:, q])
            A += scale * wval * (grads @ grads.T)
        else:
            # vector basis v_I = phi_a e_c with I = a + c*nb; vgrad[I, alpha, x] = d v_I[alpha] / dx
            vgrad = np.zeros((kr, spec.dim, spec.dim))
            for c in range(spec.dim):
                for a in range(nb):
                    vgrad[a + c * nb, c, :] = grads[a]
            A += 0.25 * scale * np.einsum("iax,jax->ij", vgrad, vgrad)
    return A


def assemble_direct(spec, coords, coefficients=None):
    """Oracle matrices for every element in ``coords`` (``(n, dim+1, dim)``)."""
    tables = _oracle_tables(spec)
    out = np.empty((len(coords), spec.krows, spec.krows))
    for e, verts in enumerate(coords):
        w = None if coefficients is None else coefficients[e]
        out[e] = assemble_element_direct(spec, verts, w, tables)
    return out


@dataclass(frozen=True)
class OracleReport:
    """Worst-case engine vs oracle discrepancy.

    ``max_rel_error`` is per entry: ``|e - o| / |o|``, falling back to the
    absolute error where ``|o|`` is below ``SCALE_FLOOR``.  ``passed`` is judged
    on it alone.  ``max_scaled_error`` divides by the largest entry of the same
    element matrix instead and is reported for diagnosis only.
    """

    max_rel_error: float
    max_abs_error: float
    worst_element: int
    worst_entry: tuple
    tolerance: float
    passed: bool
    max_scaled_error: float = 0.0

    def summary(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict}: max rel error {self.max_rel_error:.3e} (tol {self.tolerance:.1e}), "
            f"max abs error {self.max_abs_error:.3e}, worst element {self.worst_element} "
            f"entry {self.worst_entry}, max scaled error {self.max_scaled_error:.3e}"
        )


def compare(engine_matrices, oracle_matrices, tolerance):
    engine_matrices = np.asarray(engine_matrices, dtype=np.float64)
    if engine_matrices.shape != oracle_matrices.shape:
        raise ValueError(
            f"engine matrices {engine_matrices.shape} vs oracle {oracle_matrices.shape}"
        )
    if engine_matrices.size == 0:
        return OracleReport(0.0, 0.0, -1, (-1, -1), tolerance, True)
    abs_err = np.abs(engine_matrices - oracle_matrices)
    magnitude = np.abs(oracle_matrices)
    tiny = magnitude < SCALE_FLOOR
    rel_err = np.where(tiny, abs_err, abs_err / np.where(tiny, 1.0, magnitude))
    worst = np.unravel_index(np.argmax(rel_err), rel_err.shape)
    max_rel = float(rel_err[worst])
    scale = np.maximum(magnitude.max(axis=(1, 2), keepdims=True), SCALE_FLOOR)
    return OracleReport(
        max_rel, float(abs_err.max()), int(worst[0]), (int(worst[1]), int(worst[2])),
        tolerance, bool(max_rel <= tolerance), float((abs_err / scale).max()),
    )


def verify(engine_store, mesh, spec, config, w=None, tolerance=1e-12):
    """Compare every real element of ``engine_store`` with the oracle."""
    if engine_store.num_elements != mesh.num_elements:
        raise ValueError(
            f"store holds {engine_store.num_elements} elements, mesh has {mesh.num_elements}"
        )
    if engine_store.krows != spec.krows or engine_store.dim != spec.dim or mesh.dim != spec.dim:
        raise ValueError("store, mesh and form disagree on dimension or KROWS")
    if engine_store.config.element_batch_size != config.element_batch_size:
        raise ValueError("store was produced with a different batch size")
    coeffs = None if w is None else np.asarray(getattr(w, "values", w))
    oracle = assemble_direct(spec, mesh.element_coordinates(), coeffs)
    return compare(engine_store.matrices(), oracle, tolerance)

