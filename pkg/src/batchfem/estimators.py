"""Estimator-style front ends.

``fit`` does all the mesh-independent work (analytic tensor, kernel
specialization); ``transform`` maps element geometry to element matrices.
"""
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_coefficients, check_element_coordinates
from .engine import KernelConfig, flop_count, integrate_batches, specialize_kernel
from .forms import FormSpec, build_analytic_tensor
from .geometry import pack_geometry
from .oracle import assemble_direct


class ElementIntegrator(TransformerMixin, BaseEstimator):
    """Batched element-matrix integration by G x K contraction.

    Parameters mirror the kernel tuning axes.  ``transform(X)`` accepts a Mesh
    or an array of element vertex coordinates ``(n, dim+1, dim)`` and returns
    element matrices ``(n, KROWS, KROWS)``.
    """

    def __init__(self, operator="laplacian", dim=2, batch_size=128, concurrent=2,
                 interleave=True, unroll=False, precision="double", n_workers=1):
        self.operator = operator
        self.dim = dim
        self.batch_size = batch_size
        self.concurrent = concurrent
        self.interleave = interleave
        self.unroll = unroll
        self.precision = precision
        self.n_workers = n_workers

    def fit(self, X=None, y=None):
        self.form_spec_ = FormSpec(self.operator, self.dim)
        if X is not None:
            check_element_coordinates(X, self.form_spec_.dim)
        self.config_ = KernelConfig(
            self.batch_size, self.concurrent, self.interleave, self.unroll, self.precision
        )
        self.analytic_tensor_ = build_analytic_tensor(self.form_spec_)
        self.variant_ = specialize_kernel(self.form_spec_, self.analytic_tensor_, self.config_)
        return self

    def integrate(self, X, coefficients=None):
        """Element matrices in batch layout (an ElementMatrixStore)."""
        check_is_fitted(self, "variant_")
        spec = self.form_spec_
        coords = check_element_coordinates(X, spec.dim)
        coefficients = check_coefficients(coefficients, len(coords), spec.num_basis_funcs)
        geom = pack_geometry(coords, self.config_)
        return integrate_batches(self.variant_, geom, coefficients, workers=self.n_workers)

    def transform(self, X, coefficients=None):
        return self.integrate(X, coefficients).matrices()

    def flops(self, num_elements):
        check_is_fitted(self, "variant_")
        return flop_count(self.form_spec_, self.config_, num_elements)


class DirectQuadratureIntegrator(TransformerMixin, BaseEstimator):
    """Reference integrator: per-element quadrature in physical space, double precision."""

    def __init__(self, operator="laplacian", dim=2):
        self.operator = operator
        self.dim = dim

    def fit(self, X=None, y=None):
        self.form_spec_ = FormSpec(self.operator, self.dim)
        if X is not None:
            check_element_coordinates(X, self.form_spec_.dim)
        return self

    def transform(self, X, coefficients=None):
        check_is_fitted(self, "form_spec_")
        spec = self.form_spec_
        coords = check_element_coordinates(X, spec.dim)
        coefficients = check_coefficients(coefficients, len(coords), spec.num_basis_funcs)
        if spec.coefficient_arity and coefficients is None:
            raise ValueError(f"{spec.operator.value} needs coefficients")
        return assemble_direct(spec, coords, None if coefficients is None else coefficients.values)
