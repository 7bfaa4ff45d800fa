#!/usr/bin/env python3
"""Desk-scale noise sweep: tightness (EVR) and accuracy per noise level.

Runs ten seeds per level at N=20 (range-only) and N=10 (pose estimation);
results land in out/noise_<problem>/ with per-solver records. The reference
study size is larger; the scale here is recorded in the metadata.
"""

import sys

from chordalloc import harness


def main() -> int:
    setups = {
        "ctro": dict(n=20, noises=(0.01, 0.05, 0.1, 0.2, 0.5)),
        "mw": dict(n=10, noises=(0.5, 1.0, 2.0, 5.0)),
    }
    for problem, setup in setups.items():
        out_dir = f"out/noise_{problem}"
        config = harness.ExperimentConfig(
            problem=problem,
            solvers=("local", "local-gt", "sdp", "dsdp", "dsdp-admm"),
            sizes=(setup["n"],),
            noises=setup["noises"],
            n_seeds=10,
            out_dir=out_dir,
        )
        records = harness.run_noise_study(config)
        harness.write_metadata(
            config, out_dir, "desk-scale noise sweep (reduced N vs reference runs)"
        )
        print(f"{problem}: {len(records)} records -> {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
