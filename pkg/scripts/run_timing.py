#!/usr/bin/env python3
"""Desk-scale timing sweep for both problems.

The decomposed solvers and the local baseline run over the full size grid;
the monolithic solve, being the cubic baseline, skips the largest size.
Writes record CSVs and plot-ready TSV series under out/timing_<problem>/.
"""

import os
import sys

from chordalloc import harness


def main() -> int:
    grids = {
        "ctro": ((8, 16, 32, 64, 128), 0.1),
        "mw": ((4, 8, 16, 32, 64), 1.0),
    }
    for problem, (sizes, noise) in grids.items():
        out_dir = f"out/timing_{problem}"
        fast = harness.ExperimentConfig(
            problem=problem,
            solvers=("local", "local-gt", "dsdp", "dsdp-admm"),
            sizes=sizes,
            noises=(noise,),
        )
        full = harness.ExperimentConfig(
            problem=problem, solvers=("sdp",), sizes=sizes[:-1], noises=(noise,)
        )
        records = harness.run_timing_study(fast) + harness.run_timing_study(full)
        os.makedirs(out_dir, exist_ok=True)
        harness.write_records_csv(f"{out_dir}/timing_{problem}_records.csv", records)
        harness.report(records, out_dir)
        harness.write_metadata(fast, out_dir, "desk-scale timing sweep")
        print(f"{problem}: {len(records)} records -> {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
