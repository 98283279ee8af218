#!/usr/bin/env python3
"""Run every scenario in scenarios/ and print a one-line summary for each.

usage: python scripts/run_scenarios.py [OUT_DIR]
"""
import sys
import time
from pathlib import Path

from hybridyn import emit, scenario
from hybridyn.errors import HybridError

ROOT = Path(__file__).resolve().parent.parent


def summary(report: dict) -> str:
    cons = report.get("conservation", {})
    bits = [f"drift={cons.get('norm_drift_rate', float('nan')):.1e}",
            f"herm={cons.get('max_hermiticity_error', float('nan')):.1e}"]
    if "oracle" in report:
        o = report["oracle"]
        bits.append(f"oracle={o.get('linf', o.get('max_trace_distance')):.1e}")
    if "closed_form" in report:
        bits.append(f"vs_closed={report['closed_form']['linf']:.1e}")
    if "roundtrip_trace_distance" in report:
        bits.append(f"roundtrip={report['roundtrip_trace_distance']:.1e}")
    return " ".join(bits)


def main(out_dir: str = "out") -> int:
    failed = 0
    for path in sorted((ROOT / "scenarios").glob("*.yaml")):
        t0 = time.perf_counter()
        try:
            res = scenario.run(scenario.load_file(path))
        except HybridError as exc:
            failed += 1
            print(f"{path.stem:24s} FAILED {type(exc).__name__}: {exc}")
            continue
        emit.write_all(res.files, Path(out_dir) / path.stem)
        print(f"{path.stem:24s} {time.perf_counter() - t0:6.1f}s  {summary(res.report)}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
