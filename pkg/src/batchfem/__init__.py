"""Batched finite-element element-matrix integration by G x K tensor contraction."""
from .engine import (
    CoefficientField, ElementMatrixStore, KernelConfig, KernelVariant, flop_count,
    integrate_batches, specialize_kernel, unpack_element_matrix,
)
from .estimators import DirectQuadratureIntegrator, ElementIntegrator
from .exceptions import ConfigurationError, DegenerateElementError, QuadratureDegreeError
from .forms import (
    AnalyticTensor, FormSpec, Operator, build_k_elasticity, build_k_laplacian,
    build_k_weighted_laplacian, integrate_jet_product,
)
from .geometry import (
    Mesh, PackedGeometry, element_jacobian, geometry_tensor, jitter_mesh, pack_geometry,
    structured_simplicial_mesh,
)
from .oracle import OracleReport, assemble_element_direct, verify

__version__ = "0.1.0"
