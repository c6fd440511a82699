"""Timing harness: single benchmarks, exhaustive variant sweeps, CSV/JSON records.

Reported rates cover the contraction kernel only.  Mesh generation, analytic
tensor construction and kernel specialization are never timed; geometry packing
is excluded unless ``include_packing`` is set.
"""
import csv
import dataclasses
import itertools
import json
import logging
import time
from dataclasses import dataclass

import numpy as np

from .engine import (
    KernelConfig, default_coefficient, flop_count, integrate_batches, specialize_kernel,
)
from .exceptions import ConfigurationError
from .forms import FormSpec, build_analytic_tensor
from .geometry import jitter_mesh, pack_geometry, structured_simplicial_mesh
from .oracle import verify

log = logging.getLogger(__name__)

CSV_HEADER = (
    "operator", "dim", "num_elements", "batch_size", "concurrent", "interleave", "unroll",
    "precision", "workers", "reps", "seconds_min", "seconds_mean", "gflops", "checksum", "status",
)

DEFAULT_TOLERANCE = {"double": 1e-12, "single": 5e-5}
_PRECISION_LABEL = {"single": "f32", "double": "f64"}


class VerificationError(RuntimeError):
    def __init__(self, report):
        self.report = report
        super().__init__(report.summary())


@dataclass(frozen=True)
class BenchOptions:
    operator: str = "laplacian"
    dim: int = 3
    n: int = 16
    batch_size: int = 128
    concurrent: int = 2
    interleave: bool = True
    unroll: bool = False
    precision: str = "single"
    workers: int = 1
    reps: int = 3
    seed: int = 42
    jitter: float = 0.0
    include_packing: bool = False
    verify: bool = False
    tolerance: float = None

    def config(self):
        return KernelConfig(self.batch_size, self.concurrent, self.interleave, self.unroll,
                            self.precision)


@dataclass(frozen=True)
class BenchRecord:
    operator: str
    dim: int
    num_elements: int
    batch_size: int
    concurrent: int
    interleave: bool
    unroll: bool
    precision: str
    workers: int
    reps: int
    seconds_min: float
    seconds_mean: float
    gflops: float
    checksum: float
    status: str = "ok"


@dataclass
class Problem:
    """Mesh, form and coefficient shared by every variant of a run."""

    spec: FormSpec
    mesh: object
    K: object
    coefficients: object

    @classmethod
    def build(cls, options):
        if int(options.reps) < 1:
            raise ConfigurationError(f"reps must be at least 1, got {options.reps!r}")
        spec = FormSpec(options.operator, options.dim)
        mesh = structured_simplicial_mesh(spec.dim, options.n)
        mesh = jitter_mesh(mesh, options.jitter, options.seed)
        coefficients = default_coefficient(mesh) if spec.coefficient_arity else None
        return cls(spec, mesh, build_analytic_tensor(spec), coefficients)


def _time_variant(problem, options, config):
    variant = specialize_kernel(problem.spec, problem.K, config)
    geom = pack_geometry(problem.mesh, config)
    if options.verify:
        store = integrate_batches(variant, geom, problem.coefficients, workers=options.workers)
        tol = options.tolerance or DEFAULT_TOLERANCE[config.precision]
        report = verify(store, problem.mesh, problem.spec, config, problem.coefficients, tol)
        log.info("verify %s: %s", config.tag, report.summary())
        if not report.passed:
            raise VerificationError(report)
    times = []
    store = None
    for _ in range(options.reps):
        start = time.perf_counter()
        if options.include_packing:
            geom = pack_geometry(problem.mesh, config)
        store = integrate_batches(variant, geom, problem.coefficients, workers=options.workers)
        times.append(time.perf_counter() - start)
    return store, min(times), sum(times) / len(times)


def _record(problem, options, config, seconds_min=0.0, seconds_mean=0.0, checksum=0.0,
            status="ok"):
    nelem = problem.mesh.num_elements
    gflops = 0.0
    if status == "ok" and seconds_min > 0:
        gflops = flop_count(problem.spec, config, nelem) / seconds_min / 1e9
    return BenchRecord(
        problem.spec.operator.value, problem.spec.dim, nelem, config.element_batch_size,
        config.num_concurrent_elements, config.interleave_stores, config.loop_unroll,
        _PRECISION_LABEL[config.precision], int(options.workers), int(options.reps),
        float(seconds_min), float(seconds_mean), float(gflops), float(checksum), status,
    )


def run_benchmark(options, problem=None):
    """Time one kernel variant.  Configuration errors are raised before any timing."""
    config = options.config()
    if problem is None:
        problem = Problem.build(options)
    store, tmin, tmean = _time_variant(problem, options, config)
    return _record(problem, options, config, tmin, tmean, store.checksum())


def sweep(options, batch_sizes, concurrents, interleaves=(False, True), unrolls=(False, True),
          problem=None):
    """Run the Cartesian product of the tuning axes, in lexicographic axis order.

    Invalid grid points and failed verifications become rows with a non-"ok" status.
    """
    if problem is None:
        problem = Problem.build(options)
    records = []
    grid = itertools.product(sorted(set(batch_sizes)), sorted(set(concurrents)),
                             sorted(set(interleaves)), sorted(set(unrolls)))
    for bs, ce, inter, unroll in grid:
        point = dataclasses.replace(options, batch_size=bs, concurrent=ce, interleave=inter,
                                    unroll=unroll)
        try:
            config = point.config()
            store, tmin, tmean = _time_variant(problem, point, config)
        except ConfigurationError as err:
            status = "invalid: work-group bound" if "work-group" in str(err) else "invalid: divisibility"
            log.info("skipping bs=%d ce=%d: %s", bs, ce, err)
            config = KernelConfig(bs, 1, inter, unroll, options.precision)
            records.append(dataclasses.replace(_record(problem, point, config, status=status),
                                               concurrent=ce))
            continue
        except VerificationError as err:
            log.warning("verification failed for %s: %s", config.tag, err)
            records.append(_record(problem, point, config, status="failed: verify"))
            continue
        records.append(_record(problem, point, config, tmin, tmean, store.checksum()))
    return records


# -- serialization ---------------------------------------------------------------

def _to_row(record):
    row = dataclasses.asdict(record)
    row["interleave"] = "on" if record.interleave else "off"
    row["unroll"] = "on" if record.unroll else "off"
    return [row[k] for k in CSV_HEADER]


def write_csv(records, fh):
    fh.write(",".join(CSV_HEADER) + "\n")
    writer = csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
    for r in records:
        writer.writerow(_to_row(r))


_INT_FIELDS = {"dim", "num_elements", "batch_size", "concurrent", "workers", "reps"}


def _from_mapping(row):
    values = {}
    for f in dataclasses.fields(BenchRecord):
        v = row[f.name]
        if f.name in ("interleave", "unroll"):
            v = v if isinstance(v, bool) else v == "on"
        elif f.name in _INT_FIELDS:
            v = int(v)
        elif f.name in ("seconds_min", "seconds_mean", "gflops", "checksum"):
            v = float(v)
        values[f.name] = v
    return BenchRecord(**values)


def read_csv(fh):
    header = fh.readline().strip().split(",")
    if tuple(header) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header: {header}")
    reader = csv.reader(fh, quoting=csv.QUOTE_NONNUMERIC)
    return [_from_mapping(dict(zip(CSV_HEADER, row))) for row in reader if row]


def write_json(records, fh):
    rows = []
    for r in records:
        row = dataclasses.asdict(r)
        row["interleave"] = "on" if r.interleave else "off"
        row["unroll"] = "on" if r.unroll else "off"
        rows.append(row)
    json.dump(rows, fh, indent=2)
    fh.write("\n")


def read_json(fh):
    return [_from_mapping(row) for row in json.load(fh)]


def checksums_uniform(records):
    sums = {r.checksum for r in records if r.status == "ok"}
    return len(sums) <= 1


def element_count(dim, n):
    return 2 * n * n if dim == 2 else 6 * n ** 3


def grid_for_elements(dim, target):
    """Smallest structured grid size giving at least ``target`` elements."""
    n = 1
    while element_count(dim, n) < target:
        n += 1
    return n


def summarize(records):
    ok = [r for r in records if r.status == "ok"]
    if not ok:
        return "no successful runs"
    best = max(ok, key=lambda r: r.gflops)
    rates = np.array([r.gflops for r in ok])
    return (
        f"{len(ok)}/{len(records)} variants ran; best {best.gflops:.3f} GF/s at "
        f"bs={best.batch_size} ce={best.concurrent} is={'on' if best.interleave else 'off'} "
        f"unroll={'on' if best.unroll else 'off'}; median {np.median(rates):.3f} GF/s"
    )
