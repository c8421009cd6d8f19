from __future__ import annotations

from magiq.bench import bench_csv, bench_primitives


def test_bench_rows_and_ordering():
    rows = bench_primitives(16)
    ops = [r.op for r in rows]
    assert len(ops) == len(set(ops)) == 8
    assert all(r.mean_us > 0 and r.p99_us >= 0 for r in rows)
    by = {r.op: r for r in rows}
    assert by["chain_step"].mean_us < by["sign"].mean_us
    text = bench_csv(rows).splitlines()
    assert text[0] == "op,mean_us,p99_us,note"
    assert len(text) == 1 + len(rows)
    assert all(line.endswith(",measured") for line in text[1:])


def test_bench_spans_several_signing_keys():
    rows = bench_primitives(1100)
    assert {r.op for r in rows} >= {"sign", "verify"}
