"""Batched G x K contraction kernels.

A kernel variant is Python source generated for one ``(FormSpec, KernelConfig)``
pair with the batch size, concurrency, store strategy and unrolling baked in as
literals, then compiled once.  Elements are processed in batches of
``element_batch_size``; inside a batch ``num_concurrent_elements`` elements are
contracted together at each of ``serial_batch_size`` serial steps.  Every batch
is an independent unit of work writing a disjoint slice of the output, and is
vectorized over all batches of a worker's chunk.

All variants accumulate each entry in the same order (coefficient index, then
``mu``, then ``nu``) so their outputs are bitwise identical.
"""
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError
from .forms import AnalyticTensor, FormSpec, Operator
from .geometry import PackedGeometry, pad_to_batches

WORK_GROUP_LIMIT = 1024

_PRECISIONS = {
    "single": "single", "f32": "single", "float32": "single",
    "double": "double", "f64": "double", "float64": "double",
}
_DTYPES = {"single": np.float32, "double": np.float64}


def check_precision(precision):
    try:
        return _PRECISIONS[str(precision).lower()]
    except KeyError:
        raise ConfigurationError(f"unknown precision {precision!r}; use single/f32 or double/f64") from None


@dataclass(frozen=True)
class KernelConfig:
    element_batch_size: int = 128
    num_concurrent_elements: int = 2
    interleave_stores: bool = True
    loop_unroll: bool = False
    precision: str = "single"

    def __post_init__(self):
        for name in ("element_batch_size", "num_concurrent_elements"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.element_batch_size % self.num_concurrent_elements:
            raise ConfigurationError(
                "invalid: divisibility - element_batch_size "
                f"{self.element_batch_size} is not a multiple of num_concurrent_elements "
                f"{self.num_concurrent_elements}"
            )
        object.__setattr__(self, "interleave_stores", bool(self.interleave_stores))
        object.__setattr__(self, "loop_unroll", bool(self.loop_unroll))
        object.__setattr__(self, "precision", check_precision(self.precision))

    @property
    def serial_batch_size(self):
        return self.element_batch_size // self.num_concurrent_elements

    @property
    def dtype(self):
        return _DTYPES[self.precision]

    @property
    def tag(self):
        tag = f"bs{self.element_batch_size}_ce{self.num_concurrent_elements}"
        if self.interleave_stores:
            tag += "_is"
        if self.loop_unroll:
            tag += "_unroll"
        return tag


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Nodal values of a P1 coefficient, one row of ``numBasisFuncs`` values per element."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"coefficient values must be 2-D (elements, nodes), got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def interpolate(cls, mesh, func):
        """Evaluate ``func(points) -> values`` at the mesh vertices and gather per element."""
        nodal = np.asarray(func(mesh.vertices), dtype=np.float64)
        return cls(nodal[mesh.cells])

    @property
    def num_elements(self):
        return len(self.values)


def default_coefficient(mesh):
    """``w(x) = 1 + x0`` at the vertices."""
    return CoefficientField.interpolate(mesh, lambda x: 1.0 + x[:, 0])


@dataclass(frozen=True, eq=False)
class ElementMatrixStore:
    """Element matrices in batch layout.

    Entry ``(g, b, z, i, j)`` is stored at
    ``g*KROWS^2*BS + b*(CE*KROWS^2) + z*KROWS^2 + (i + j*KROWS)`` and belongs to
    batch-local element ``b*CE + z``.
    """

    data: np.ndarray
    dim: int
    krows: int
    config: KernelConfig
    num_elements: int

    @property
    def num_batches(self):
        return len(self.data) // (self.krows ** 2 * self.config.element_batch_size)

    def matrices(self):
        """All real element matrices, shape ``(numElements, KROWS, KROWS)``, rows = test index."""
        kr = self.krows
        # Kidx = i + j*KROWS, i.e. the stored block is the transpose of the row-major matrix
        m = self.data.reshape(-1, kr, kr)[:self.num_elements]
        return np.transpose(m, (0, 2, 1))

    def element_matrix(self, element):
        return unpack_element_matrix(self, self.config, self.krows, element)

    def checksum(self):
        return float(np.sum(self.matrices(), dtype=np.float64))


def eoffset(batch, krows, config):
    return batch * krows * krows * config.element_batch_size


def unpack_element_matrix(store, config, spec, element_index):
    """Read one element's matrix from ``store`` by explicit Eoffset arithmetic.

    ``spec`` may be a FormSpec or the KROWS integer.
    """
    krows = spec if isinstance(spec, int) else spec.krows
    if not 0 <= element_index < store.num_elements:
        raise IndexError(f"element {element_index} out of range for {store.num_elements} elements")
    bs, ce = config.element_batch_size, config.num_concurrent_elements
    g, local = divmod(element_index, bs)
    b, z = divmod(local, ce)
    base = eoffset(g, krows, config) + b * ce * krows * krows + z * krows * krows
    out = np.empty((krows, krows), dtype=store.data.dtype)
    for i in range(krows):
        for j in range(krows):
            out[i, j] = store.data[base + i + j * krows]
    return out


def flop_count(spec, config, num_elements):
    """Floating-point operations for ``num_elements`` element matrices.

    A multiply-add counts as 2.  Per entry: ``2*dim^2`` for the contraction; the
    weighted form repeats that per coefficient node and adds 2 for the scaling
    and accumulation of each partial sum.  Padding elements are not counted.
    """
    per_entry = 2 * spec.dim ** 2
    if spec.coefficient_arity:
        per_entry = spec.num_basis_funcs * (per_entry + 2)
    return int(num_elements) * spec.krows ** 2 * per_entry


# -- code generation -------------------------------------------------------------

def _contraction_lines(spec, config, indent, target, g, weights):
    dd = spec.block_size
    pad = " " * indent
    lines = []

    def contract(dest, k):
        kname = (lambda m: f"K_{m}") if k is None else (lambda m: f"K_{k}_{m}")
        if config.loop_unroll:
            out = [f"{pad}{dest} = {g}[:, :, 0, None] * {kname(0)}"]
            out += [f"{pad}{dest} += {g}[:, :, {m}, None] * {kname(m)}" for m in range(1, dd)]
            return out
        col = "analytic[:, {}]" if k is None else f"analytic[:, {k}, {{}}]"
        return [
            f"{pad}{dest} = {g}[:, :, 0, None] * {col.format(0)}",
            f"{pad}for m in range(1, {dd}):",
            f"{pad}    {dest} += {g}[:, :, m, None] * {col.format('m')}",
        ]

    if not spec.coefficient_arity:
        return contract(target, None)
    for k in range(spec.num_coefficients):
        lines += contract("t", k)
        op = "=" if k == 0 else "+="
        lines.append(f"{pad}{target} {op} {weights}[:, :, {k}, None] * t")
    return lines


def generate_kernel_source(spec, config, name="kernel"):
    """Python source of the specialized kernel for one variant.

    Signature: ``kernel(elem_mat, geometry, analytic, coefficient)`` with
    ``elem_mat[batch, b, z, Kidx]``, ``geometry[batch, b, z, mu*DIM+nu]``,
    ``analytic[Kidx, (k,) mu*DIM+nu]`` and ``coefficient[batch, b, z, k]``.
    """
    serial = config.serial_batch_size
    weighted = bool(spec.coefficient_arity)
    src = [
        f"def {name}(elem_mat, geometry, analytic, coefficient):",
        f'    """{spec.operator.value} {spec.dim}D, {config.tag}, {config.precision}."""',
    ]
    if config.loop_unroll:
        for m in range(spec.block_size):
            if weighted:
                src += [f"    K_{k}_{m} = analytic[:, {k}, {m}]" for k in range(spec.num_coefficients)]
            else:
                src.append(f"    K_{m} = analytic[:, {m}]")
    if not config.interleave_stores:
        src.append("    E = np.empty(elem_mat.shape, dtype=elem_mat.dtype)")
    dest = "elem_mat" if config.interleave_stores else "E"

    def step(b, indent):
        pad = " " * indent
        out = [f"{pad}g = geometry[:, {b}]"]
        if weighted:
            out.append(f"{pad}w = coefficient[:, {b}]")
        out += _contraction_lines(spec, config, indent, "e", "g", "w")
        out.append(f"{pad}{dest}[:, {b}] = e")
        return out

    if config.loop_unroll:
        for b in range(serial):
            src += step(b, 4)
    else:
        src.append(f"    for b in range({serial}):")
        src += step("b", 8)
    if not config.interleave_stores:
        src.append("    elem_mat[...] = E")
    return "\n".join(src) + "\n"


@dataclass(frozen=True, eq=False)
class KernelVariant:
    config: KernelConfig
    spec: FormSpec
    K: np.ndarray
    description: str
    source: str = field(repr=False)
    kernel: object = field(repr=False)


def specialize_kernel(spec, K, config):
    if not isinstance(K, AnalyticTensor) or K.spec != spec:
        raise ConfigurationError("analytic tensor was built for a different form")
    items = spec.krows ** 2 * config.num_concurrent_elements
    if items > WORK_GROUP_LIMIT:
        raise ConfigurationError(
            f"invalid: work-group bound - {spec.krows}^2 x {config.num_concurrent_elements} = "
            f"{items} work items exceeds {WORK_GROUP_LIMIT}"
        )
    name = f"{spec.operator.name.lower()}_{spec.dim}d_{config.tag}_{config.precision}"
    source = generate_kernel_source(spec, config, name)
    namespace = {"np": np}
    exec(compile(source, f"<kernel {name}>", "exec"), namespace)
    analytic = np.ascontiguousarray(K.as_array(config.dtype))
    analytic.setflags(write=False)
    return KernelVariant(config, spec, analytic, config.tag, source, namespace[name])


def _chunks(num_batches, workers):
    workers = max(1, min(int(workers), num_batches))
    edges = np.linspace(0, num_batches, workers + 1).round().astype(int)
    return [(lo, hi) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def pack_coefficients(coeffs, spec, config):
    values, _ = pad_to_batches(np.asarray(coeffs.values), config.element_batch_size)
    return np.ascontiguousarray(values.astype(config.dtype))


def integrate_batches(variant, geom, coeffs=None, workers=1):
    """Element matrices for every element packed in ``geom``.

    Padding slots of the last batch are computed but never reported.
    """
    spec, config = variant.spec, variant.config
    if not isinstance(geom, PackedGeometry):
        raise TypeError("geometry must be a PackedGeometry")
    if geom.dim != spec.dim:
        raise ValueError(f"geometry is {geom.dim}D but the kernel is {spec.dim}D")
    if geom.element_batch_size != config.element_batch_size:
        raise ValueError(
            f"geometry packed with batch size {geom.element_batch_size}, "
            f"kernel expects {config.element_batch_size}"
        )
    if spec.coefficient_arity and coeffs is None:
        raise ValueError(f"{spec.operator.value} needs a coefficient field")
    if not spec.coefficient_arity and coeffs is not None:
        raise ValueError(f"{spec.operator.value} takes no coefficient field")
    if coeffs is not None and coeffs.values.shape != (geom.num_elements, spec.num_basis_funcs):
        raise ValueError(
            f"coefficient field has shape {coeffs.values.shape}, expected "
            f"{(geom.num_elements, spec.num_basis_funcs)}"
        )

    nbatch = geom.num_batches
    serial, ce, kk = config.serial_batch_size, config.num_concurrent_elements, spec.krows ** 2
    gdata = geom.data if geom.data.dtype == config.dtype else geom.data.astype(config.dtype)
    G = gdata.reshape(nbatch, serial, ce, spec.block_size)
    W = None
    if coeffs is not None:
        W = pack_coefficients(coeffs, spec, config).reshape(nbatch, serial, ce, spec.num_basis_funcs)
    out = np.empty(nbatch * config.element_batch_size * kk, dtype=config.dtype)
    E = out.reshape(nbatch, serial, ce, kk)

    def run(chunk):
        lo, hi = chunk
        variant.kernel(E[lo:hi], G[lo:hi], variant.K, None if W is None else W[lo:hi])

    chunks = _chunks(nbatch, workers)
    if len(chunks) <= 1:
        for c in chunks:
            run(c)
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(run, chunks))
    out.setflags(write=False)
    return ElementMatrixStore(out, spec.dim, spec.krows, config, geom.num_elements)


# -- binary dump -----------------------------------------------------------------

_MAGIC = b"BFEM"
_HEADER = struct.Struct("<4s6i")
_PRECISION_CODES = {"single": 4, "double": 8}


def dump_store(store, fh):
    """Header ``(magic, dim, KROWS, BS, CE, numElements, precision code)``, then little-endian data."""
    cfg = store.config
    fh.write(_HEADER.pack(
        _MAGIC, store.dim, store.krows, cfg.element_batch_size, cfg.num_concurrent_elements,
        store.num_elements, _PRECISION_CODES[cfg.precision],
    ))
    fh.write(store.data.astype(store.data.dtype.newbyteorder("<"), copy=False).tobytes())


def load_store(fh):
    magic, dim, krows, bs, ce, nelem, code = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != _MAGIC:
        raise ValueError(f"not an element-matrix dump (magic {magic!r})")
    precision = {v: k for k, v in _PRECISION_CODES.items()}[code]
    config = KernelConfig(bs, ce, precision=precision)
    data = np.frombuffer(fh.read(), dtype=np.dtype(config.dtype).newbyteorder("<"))
    data = data.astype(config.dtype)
    data.setflags(write=False)
    return ElementMatrixStore(data, dim, krows, config, nelem)

