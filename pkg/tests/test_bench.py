import dataclasses
import io
import json

import numpy as np
import pytest

from batchfem import bench
from batchfem.cli import main
from batchfem.exceptions import ConfigurationError
from batchfem.geometry import load_mesh

SMALL = bench.BenchOptions(operator="weighted-laplacian", dim=2, n=6, reps=2, jitter=0.1)


def test_run_benchmark_record():
    rec = bench.run_benchmark(dataclasses.replace(SMALL, batch_size=16, concurrent=2))
    assert rec.status == "ok"
    assert rec.num_elements == 72
    assert rec.seconds_min <= rec.seconds_mean
    assert rec.gflops > 0
    assert rec.precision == "f32"
    assert rec.checksum != 0


def test_repetitions_do_not_change_values():
    one = bench.run_benchmark(dataclasses.replace(SMALL, reps=1))
    five = bench.run_benchmark(dataclasses.replace(SMALL, reps=5))
    assert one.checksum == five.checksum


def test_configuration_errors_precede_timing():
    with pytest.raises(ConfigurationError):
        bench.run_benchmark(dataclasses.replace(SMALL, batch_size=5, concurrent=2))
    with pytest.raises(ConfigurationError):
        bench.run_benchmark(dataclasses.replace(SMALL, reps=0))


def test_verify_gate_blocks_record(monkeypatch):
    from batchfem.oracle import OracleReport

    def failing(*args, **kwargs):
        return OracleReport(1.0, 1.0, 0, (0, 0), 1e-12, False)

    monkeypatch.setattr(bench, "verify", failing)
    with pytest.raises(bench.VerificationError):
        bench.run_benchmark(dataclasses.replace(SMALL, verify=True))


def test_verify_gate_passes_on_structured_mesh():
    rec = bench.run_benchmark(dataclasses.replace(SMALL, jitter=0.0, verify=True, precision="double"))
    assert rec.status == "ok"


def test_sweep_sixteen_rows_uniform_checksum():
    records = bench.sweep(SMALL, [32, 128], [1, 2])
    assert len(records) == 16
    keys = [(r.batch_size, r.concurrent, r.interleave, r.unroll) for r in records]
    assert keys == sorted(keys)
    assert all(r.status == "ok" for r in records)
    assert bench.checksums_uniform(records)


def test_sweep_marks_invalid_points():
    records = bench.sweep(SMALL, [32], [3], [True], [False])
    assert len(records) == 1
    assert records[0].status == "invalid: divisibility"
    assert records[0].concurrent == 3
    el = dataclasses.replace(SMALL, operator="elasticity", dim=3, n=1)
    records = bench.sweep(el, [16], [8], [True], [False])
    assert records[0].status == "invalid: work-group bound"


def test_csv_roundtrip_exact():
    records = bench.sweep(SMALL, [16, 32], [1, 3])
    buf = io.StringIO()
    bench.write_csv(records, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == (
        "operator,dim,num_elements,batch_size,concurrent,interleave,unroll,precision,workers,"
        "reps,seconds_min,seconds_mean,gflops,checksum,status"
    )
    assert '"weighted-laplacian"' in text
    assert bench.read_csv(io.StringIO(text)) == records


def test_json_roundtrip_exact():
    records = bench.sweep(SMALL, [16], [1, 2])
    buf = io.StringIO()
    bench.write_json(records, buf)
    assert bench.read_json(io.StringIO(buf.getvalue())) == records


def test_sweep_twice_same_checksums():
    a = bench.sweep(SMALL, [16, 64], [2], [True], [False, True])
    b = bench.sweep(SMALL, [16, 64], [2], [True], [False, True])
    assert [r.checksum for r in a] == [r.checksum for r in b]


def test_grid_for_elements():
    assert bench.grid_for_elements(3, 200_000) == 33
    assert bench.element_count(3, 32) == 196_608
    assert bench.grid_for_elements(2, 1000) == 23


# -- CLI -------------------------------------------------------------------------

def test_cli_verify_ok(capsys):
    assert main(["verify", "--dim", "2", "--n", "4", "--jitter", "0.15", "--batch-size", "8"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_cli_verify_fails_with_tiny_tolerance(capsys):
    rc = main(["verify", "--dim", "3", "--n", "2", "--jitter", "0.15", "--precision", "f32",
               "--tolerance", "1e-20"])
    assert rc == 1
    assert "FAIL" in capsys.readouterr().out


def test_cli_bad_config_exit_code():
    assert main(["bench", "--dim", "2", "--n", "2", "--batch-size", "5", "--concurrent", "2"]) == 2


def test_cli_bench_json(tmp_path):
    out = tmp_path / "b.json"
    rc = main(["bench", "--operator", "elasticity", "--dim", "2", "--n", "4", "--reps", "2",
               "--format", "json", "--output", str(out), "--verify", "--precision", "f64"])
    assert rc == 0
    rows = json.loads(out.read_text())
    assert rows[0]["operator"] == "elasticity" and rows[0]["status"] == "ok"


def test_cli_sweep_csv(tmp_path):
    out = tmp_path / "s.csv"
    rc = main(["sweep", "--dim", "2", "--n", "4", "--reps", "1", "--batch-size", "32,128",
               "--concurrent", "1,2,3", "--output", str(out)])
    assert rc == 0
    with open(out) as fh:
        records = bench.read_csv(fh)
    assert len(records) == 2 * 3 * 2 * 2
    assert sum(r.status == "invalid: divisibility" for r in records) == 8


def test_cli_dump_k(capsys):
    assert main(["dump-k", "--operator", "laplacian", "--dim", "2"]) == 0
    out = capsys.readouterr().out
    assert "block i=1 j=2" in out


def test_cli_dump_mesh(tmp_path):
    out = tmp_path / "m.txt"
    assert main(["dump-mesh", "--dim", "3", "--n", "2", "--jitter", "0.1", "--output", str(out)]) == 0
    with open(out) as fh:
        mesh = load_mesh(fh)
    assert mesh.num_elements == 48
