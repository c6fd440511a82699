import argparse
import contextlib
import logging
import sys

from . import bench
from .engine import KernelConfig, integrate_batches, specialize_kernel
from .exceptions import ConfigurationError, DegenerateElementError
from .forms import FormSpec, build_analytic_tensor, format_k_blocks
from .geometry import dump_mesh, jitter_mesh, pack_geometry, structured_simplicial_mesh
from .oracle import verify

log = logging.getLogger("batchfem")

EXIT_VERIFY_FAILED = 1
EXIT_BAD_CONFIG = 2


def _on_off(text):
    text = text.strip().lower()
    if text in ("on", "true", "1", "yes"):
        return True
    if text in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def _int_list(text):
    return [int(x) for x in text.split(",") if x]


def _on_off_list(text):
    return [_on_off(x) for x in text.split(",") if x]


def _common(precision_default):
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--operator", default="laplacian",
                   choices=["laplacian", "elasticity", "weighted-laplacian"])
    p.add_argument("--dim", type=int, default=3, choices=[2, 3])
    p.add_argument("--n", type=int, default=16, help="structured grid cells per axis")
    p.add_argument("--precision", default=precision_default, choices=["f32", "f64"])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jitter", type=float, default=0.0,
                   help="interior vertex jitter as a fraction of the mesh spacing")
    p.add_argument("--output", default="-", help="output path ('-' for stdout)")
    p.add_argument("--format", default="csv", choices=["csv", "json"])
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _single_variant(p):
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--concurrent", type=int, default=2)
    p.add_argument("--interleave", type=_on_off, default=True, metavar="{on,off}")
    p.add_argument("--unroll", type=_on_off, default=False, metavar="{on,off}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="batchfem",
        description="Batched finite-element element-matrix integration: verify, benchmark, sweep.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", parents=[_common("f64")],
                       help="compare one kernel variant with the direct-quadrature oracle")
    _single_variant(p)
    p.add_argument("--tolerance", type=float, default=None)

    p = sub.add_parser("bench", parents=[_common("f32")], help="time one kernel variant")
    _single_variant(p)
    p.add_argument("--verify", action="store_true", help="gate the record on an oracle check")
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--include-packing", action="store_true")

    p = sub.add_parser("sweep", parents=[_common("f32")],
                       help="time every combination of the tuning axes")
    p.add_argument("--batch-size", type=_int_list, default=[16, 32, 64, 128])
    p.add_argument("--concurrent", type=_int_list, default=[1, 2, 4, 8])
    p.add_argument("--interleave", type=_on_off_list, default=[False, True])
    p.add_argument("--unroll", type=_on_off_list, default=[False, True])
    p.add_argument("--verify", action="store_true")
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--include-packing", action="store_true")

    p = sub.add_parser("dump-k", parents=[_common("f64")], help="print the analytic tensor blocks")

    p = sub.add_parser("dump-mesh", parents=[_common("f64")], help="write the test mesh as text")
    return parser


@contextlib.contextmanager
def _open_output(path):
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _precision(args):
    return "single" if args.precision == "f32" else "double"


def _options(args, **overrides):
    fields = dict(
        operator=args.operator, dim=args.dim, n=args.n, precision=_precision(args),
        workers=args.workers, reps=args.reps, seed=args.seed, jitter=args.jitter,
        verify=getattr(args, "verify", False), tolerance=getattr(args, "tolerance", None),
        include_packing=getattr(args, "include_packing", False),
    )
    fields.update(overrides)
    return bench.BenchOptions(**fields)


def _emit(records, args):
    with _open_output(args.output) as fh:
        if args.format == "json":
            bench.write_json(records, fh)
        else:
            bench.write_csv(records, fh)


def cmd_verify(args):
    options = _options(args, batch_size=args.batch_size, concurrent=args.concurrent,
                       interleave=args.interleave, unroll=args.unroll)
    config = options.config()
    problem = bench.Problem.build(options)
    variant = specialize_kernel(problem.spec, problem.K, config)
    store = integrate_batches(variant, pack_geometry(problem.mesh, config),
                              problem.coefficients, workers=options.workers)
    tol = args.tolerance or bench.DEFAULT_TOLERANCE[config.precision]
    report = verify(store, problem.mesh, problem.spec, config, problem.coefficients, tol)
    with _open_output(args.output) as fh:
        fh.write(
            f"{problem.spec.operator.value} {problem.spec.dim}D, {problem.mesh.num_elements} "
            f"elements, {variant.description}, {config.precision}\n{report.summary()}\n"
        )
    return 0 if report.passed else EXIT_VERIFY_FAILED


def cmd_bench(args):
    options = _options(args, batch_size=args.batch_size, concurrent=args.concurrent,
                       interleave=args.interleave, unroll=args.unroll)
    try:
        record = bench.run_benchmark(options)
    except bench.VerificationError as err:
        log.error("verification failed, no record emitted: %s", err)
        return EXIT_VERIFY_FAILED
    _emit([record], args)
    return 0


def cmd_sweep(args):
    options = _options(args)
    records = bench.sweep(options, args.batch_size, args.concurrent, args.interleave, args.unroll)
    _emit(records, args)
    log.info(bench.summarize(records))
    if not bench.checksums_uniform(records):
        log.error("checksums differ between variants")
        return EXIT_VERIFY_FAILED
    if any(r.status.startswith("failed") for r in records):
        return EXIT_VERIFY_FAILED
    return 0


def cmd_dump_k(args):
    K = build_analytic_tensor(FormSpec(args.operator, args.dim))
    with _open_output(args.output) as fh:
        fh.write(format_k_blocks(K) + "\n")
    return 0


def cmd_dump_mesh(args):
    mesh = structured_simplicial_mesh(args.dim, args.n)
    mesh = jitter_mesh(mesh, args.jitter, args.seed)
    with _open_output(args.output) as fh:
        dump_mesh(mesh, fh)
    return 0


COMMANDS = {
    "verify": cmd_verify,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "dump-k": cmd_dump_k,
    "dump-mesh": cmd_dump_mesh,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, DegenerateElementError) as err:
        log.error("%s", err)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
