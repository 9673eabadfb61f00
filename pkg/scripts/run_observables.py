#!/usr/bin/env python3
"""Static observables of the g-family: transverse magnetization across the
injective/non-injective boundary (transfer matrix vs dense cross-check),
blocked-tensor condition numbers, and preparation fidelity curves.
"""

import argparse
import sys

from tnprep.experiments import GFamilyConfig, run_experiment, write_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="tnprep-runs/observables")
    ap.add_argument("--N", type=int, default=8)
    ap.add_argument("--curve-N", type=int, default=4)
    ap.add_argument("--curve-steps", type=int, default=700)
    args = ap.parse_args()

    for kind, cfg in (
        ("magnetization", GFamilyConfig(N=args.N)),
        ("condition_number", GFamilyConfig()),
        ("fidelity_curves", GFamilyConfig(N=args.curve_N,
                                          curve_steps=args.curve_steps)),
    ):
        res = run_experiment(cfg, kind)
        write_experiment(res, f"{args.out}/{kind}")
        for note in res.provenance["notes"]:
            print(f"[{kind}] {note}", file=sys.stderr)
    print(f"wrote {args.out}/{{magnetization,condition_number,"
          f"fidelity_curves}}/result.json", file=sys.stderr)


if __name__ == "__main__":
    main()
