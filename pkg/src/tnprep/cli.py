"""Command-line entry point.

Config-file-first: every subcommand accepts --config pointing at a JSON file
whose keys mirror the flags; explicit flags override file values, and the
fully resolved config is written next to the outputs so a run documents
itself.  Diagnostics go to stderr, data to files.  Exit codes: 0 success,
1 validation error, 2 capacity-guard refusal, 3 numerical failure.

Heavy imports happen after argument parsing so --threads can pin the BLAS
pool before numpy starts.
"""

import argparse
import json
import os
import sys
from pathlib import Path

COMMANDS = ("spectrum", "gap", "bounds", "evolve", "channel", "experiment", "block")

OUT_ROOT_ENV = "TNPREP_OUT"


class _Parser(argparse.ArgumentParser):
    """argparse exits with its own code 2 on bad flags; route through the
    validation path instead so exit codes keep their documented meaning."""

    def error(self, message):
        from .errors import ValidationError
        raise ValidationError(message)


def _build_parser():
    p = _Parser(prog="tnprep", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="store_true", help="print version and exit")
    sub = p.add_subparsers(dest="command")

    def common(sp, spec=True):
        sp.add_argument("--config", help="JSON file with defaults for the flags below")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ROOT_ENV} "
                                      "or ./tnprep-runs, plus the command name)")
        sp.add_argument("--threads", type=int, default=None,
                        help="BLAS thread count (default: all cores)")
        if spec:
            sp.add_argument("--spec", help="tensor-network spec JSON")

    sp = sub.add_parser("spectrum", help="channel + Liouvillian spectra of a spec")
    common(sp)
    sp.add_argument("--gamma", type=float, default=None,
                    help="two-site rate (default 0.9x the admissible cap)")

    sp = sub.add_parser("gap", help="two smallest eigenvalues of the parent Hamiltonian")
    common(sp)
    sp.add_argument("--violations", action="store_const", const=True, default=None,
                    help="add the site violation projectors to H")

    sp = sub.add_parser("bounds", help="deviation/interference inequality suite")
    common(sp)

    sp = sub.add_parser("evolve", help="continuous-time Lindblad evolution")
    common(sp)
    sp.add_argument("--t-final", type=float, required=False, default=None)
    sp.add_argument("--dt", type=float, default=None, help="recording interval")
    sp.add_argument("--method", choices=("rk", "expm"), default=None)
    sp.add_argument("--rtol", type=float, default=None)

    sp = sub.add_parser("channel", help="discrete-time channel iteration")
    common(sp)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--mode", choices=("average", "sampled"), default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--cadence", type=int, default=None)
    sp.add_argument("--threshold", type=float, default=None,
                    help="stop when fidelity reaches this value")

    sp = sub.add_parser("experiment", help="scripted g-family studies")
    common(sp, spec=False)
    sp.add_argument("--kind", help="magnetization | condition_number | "
                                   "fidelity_curves | tmix_scaling | blocking")
    for flag, typ in (("--g", float), ("--N", int), ("--l", int),
                      ("--gamma", float), ("--seed", int), ("--threshold", float),
                      ("--max-steps", int), ("--cadence", int), ("--curve-steps", int)):
        sp.add_argument(flag, type=typ, default=None)
    sp.add_argument("--mode", choices=("average", "sampled", "auto"), default=None)

    sp = sub.add_parser("block", help="coarse-grain a uniform chain into a ring spec")
    common(sp, spec=False)
    sp.add_argument("--chain", help="uniform-chain JSON (matrices per basis state)")
    sp.add_argument("--g", type=float, default=None,
                    help="use the solvable g-family chain instead of --chain")
    sp.add_argument("--N", type=int, default=None)
    sp.add_argument("--l", type=int, default=None)
    return p


def _load_config_file(args):
    """Merge file values under explicit flags: a flag left at its parser
    default takes the file's value when present."""
    if not getattr(args, "config", None):
        return {}
    path = Path(args.config)
    if not path.exists():
        from .errors import ValidationError
        raise ValidationError(f"config key config: file {path} does not exist")
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            from .errors import ValidationError
            raise ValidationError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(obj, dict):
        from .errors import ValidationError
        raise ValidationError(f"config file {path} must hold a JSON object")
    return obj


def _resolve(args, file_cfg, keys):
    """File value fills any flag the command line left unset; returns the
    fully resolved mapping and complains about unknown file keys."""
    from .errors import ValidationError
    known = set(keys) | {"command"}
    unknown = sorted(k for k in file_cfg if k not in known)
    if unknown:
        raise ValidationError(f"config key {unknown[0]!r} is not recognized "
                              f"for command {args.command!r}")
    resolved = {}
    for k in keys:
        flag_val = getattr(args, k, None)
        resolved[k] = flag_val if flag_val is not None else file_cfg.get(k)
    return resolved


def _outdir(resolved, command):
    root = resolved.get("out") or os.environ.get(OUT_ROOT_ENV) or "tnprep-runs"
    sub = command if not resolved.get("kind") else f"{command}-{resolved['kind']}"
    path = Path(root) if resolved.get("out") else Path(root) / sub
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_resolved(outdir, command, resolved):
    from . import __version__
    payload = {"command": command, "version": __version__}
    payload.update({k: v for k, v in resolved.items() if v is not None})
    with open(outdir / "resolved_config.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_spec(resolved):
    from .errors import ValidationError
    from .serialize import spec_from_json
    path = resolved.get("spec")
    if not path:
        raise ValidationError("config key spec: a spec file is required")
    if not Path(path).exists():
        raise ValidationError(f"config key spec: file {path} does not exist")
    with open(path) as fh:
        return spec_from_json(json.load(fh))


def _report_json(rep):
    out = {"eigenvalues": [[z.real, z.imag] for z in rep.eigenvalues],
           "unique_fixed_point": bool(rep.unique_fixed_point),
           "peripheral_count": int(rep.peripheral_count),
           "gap": float(rep.gap),
           "fixed_point_overlap": None if rep.fixed_point_overlap is None
           else float(rep.fixed_point_overlap)}
    out.update(rep.meta)
    return out


def _cmd_spectrum(resolved, outdir):
    from .generators import build_global_channel, max_gamma
    from .serialize import write_result_json
    from .spectral import channel_spectrum, liouvillian_spectrum
    from .tensors import assemble_state
    spec = _load_spec(resolved)
    gamma = resolved["gamma"]
    if gamma is None:
        gamma = 0.9 * max_gamma(spec)
    psi = assemble_state(spec).vector
    channel = build_global_channel(spec, gamma)
    rep_c = channel_spectrum(channel, psi=psi)
    rep_l = liouvillian_spectrum(spec, psi=psi)
    payload = {"gamma": gamma, "channel": _report_json(rep_c),
               "liouvillian": _report_json(rep_l)}
    write_result_json(outdir / "spectrum.json", payload)
    print(f"channel: unique_fixed_point={rep_c.unique_fixed_point} "
          f"gap={rep_c.gap:.6g}; liouvillian: gap={rep_l.gap:.6g}", file=sys.stderr)
    return outdir / "spectrum.json"


def _cmd_gap(resolved, outdir):
    from .generators import build_parent_ham
    from .serialize import write_result_json
    from .spectral import hamiltonian_gap
    from .tensors import assemble_state
    spec = _load_spec(resolved)
    ham = build_parent_ham(spec)
    out = hamiltonian_gap(ham, include_violations=bool(resolved["violations"]),
                          psi=assemble_state(spec).vector)
    write_result_json(outdir / "gap.json", out)
    print(f"e0={out['e0']:.6g} e1={out['e1']:.6g} gap={out['gap']:.6g}",
          file=sys.stderr)
    return outdir / "gap.json"


def _cmd_bounds(resolved, outdir):
    from .serialize import write_result_json
    from .spectral import verify_bounds
    spec = _load_spec(resolved)
    rep = verify_bounds(spec)
    payload = {"edges": {f"{e[0]}-{e[1]}": v for e, v in rep.edges.items()},
               "pairs": {f"{ej[0]}-{ej[1]}|{eh[0]}-{eh[1]}": v
                         for (ej, eh), v in rep.pairs.items()},
               "global": rep.global_report, "all_passed": bool(rep.all_passed)}
    write_result_json(outdir / "bounds.json", payload)
    for e, v in rep.edges.items():
        print(f"edge {e}: delta={v['delta']:.4f} "
              f"{'pass' if v['pass'] else 'FAIL'}", file=sys.stderr)
    print(f"all_passed={rep.all_passed}", file=sys.stderr)
    return outdir / "bounds.json"


def _cmd_evolve(resolved, outdir):
    from .dynamics import DensityMatrix, lindblad_evolve
    from .errors import ValidationError
    from .serialize import write_series_csv
    spec = _load_spec(resolved)
    if resolved["t_final"] is None:
        raise ValidationError("config key t_final: a final time is required")
    rho0 = DensityMatrix.maximally_mixed(spec.phys_dims, real=spec.is_real())
    series = lindblad_evolve(spec, rho0, resolved["t_final"],
                             dt_control=resolved["dt"],
                             rtol=resolved["rtol"] if resolved["rtol"] is not None
                             else 1e-8,
                             method=resolved["method"] or "rk")
    write_series_csv(outdir / "series.csv", series)
    print(f"t_final={resolved['t_final']} records={len(series.times)} "
          f"final_fidelity={series.fidelity[-1]:.9f}", file=sys.stderr)
    return outdir / "series.csv"


def _cmd_channel(resolved, outdir):
    from .dynamics import DensityMatrix, iterate_channel, mixing_time
    from .errors import ValidationError
    from .generators import build_global_channel, max_gamma
    from .serialize import write_series_csv
    spec = _load_spec(resolved)
    gamma = resolved["gamma"]
    if gamma is None:
        gamma = 0.9 * max_gamma(spec)
    if resolved["steps"] is None:
        raise ValidationError("config key steps: a step count is required")
    channel = build_global_channel(spec, gamma)
    rho0 = DensityMatrix.maximally_mixed(spec.phys_dims, real=spec.is_real())
    series = iterate_channel(channel, rho0, resolved["steps"],
                             cadence=resolved["cadence"] or 1,
                             mode=resolved["mode"] or "average",
                             seed=resolved["seed"] if resolved["seed"] is not None
                             else 0,
                             stop_threshold=resolved["threshold"])
    write_series_csv(outdir / "series.csv", series)
    tmix = (None if resolved["threshold"] is None
            else mixing_time(series, resolved["threshold"]))
    print(f"steps_run={series.meta['steps_run']} "
          f"final_fidelity={series.fidelity[-1]:.9f} tmix={tmix}", file=sys.stderr)
    return outdir / "series.csv"


def _cmd_experiment(resolved, outdir):
    from .errors import ValidationError
    from .experiments import config_from_dict, run_experiment, write_experiment
    kind = resolved.get("kind")
    if not kind:
        raise ValidationError("config key kind: an experiment kind is required")
    fields = {k: v for k, v in resolved.items()
              if k not in ("kind", "config", "out", "threads") and v is not None}
    cfg = config_from_dict(fields)
    result = run_experiment(cfg, kind)
    write_experiment(result, outdir)
    for note in result.provenance.get("notes", []):
        print(note, file=sys.stderr)
    print(f"wrote {outdir}/result.json", file=sys.stderr)
    return outdir / "result.json"


def _cmd_block(resolved, outdir):
    from .errors import ValidationError
    from .experiments import g_family_tensors
    from .mps import blocked_ring_spec
    from .serialize import chain_from_json, spec_to_json
    from .tensors import delta_isometry
    if resolved.get("chain"):
        path = Path(resolved["chain"])
        if not path.exists():
            raise ValidationError(f"config key chain: file {path} does not exist")
        with open(path) as fh:
            chain = chain_from_json(json.load(fh))
    elif resolved.get("g") is not None:
        chain = g_family_tensors(resolved["g"])
    else:
        raise ValidationError("config key chain: provide --chain or --g")
    if resolved["N"] is None or resolved["l"] is None:
        raise ValidationError("config key N: blocking needs both --N and --l")
    spec = blocked_ring_spec(chain, resolved["N"], resolved["l"])
    with open(outdir / "blocked_spec.json", "w") as fh:
        json.dump(spec_to_json(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")
    delta = delta_isometry(spec)["uniform"]
    print(f"blocks={resolved['N'] // resolved['l']} delta={delta:.6f}",
          file=sys.stderr)
    return outdir / "blocked_spec.json"


_DISPATCH = {"spectrum": _cmd_spectrum, "gap": _cmd_gap, "bounds": _cmd_bounds,
             "evolve": _cmd_evolve, "channel": _cmd_channel,
             "experiment": _cmd_experiment, "block": _cmd_block}

_KEYS = {
    "spectrum": ("config", "out", "threads", "spec", "gamma"),
    "gap": ("config", "out", "threads", "spec", "violations"),
    "bounds": ("config", "out", "threads", "spec"),
    "evolve": ("config", "out", "threads", "spec", "t_final", "dt", "method", "rtol"),
    "channel": ("config", "out", "threads", "spec", "gamma", "steps", "mode",
                "seed", "cadence", "threshold"),
    # grids and sampling thresholds have no flags; they come from the file
    "experiment": ("config", "out", "threads", "kind", "g", "N", "l", "gamma",
                   "seed", "threshold", "max_steps", "cadence", "curve_steps",
                   "mode", "g_grid", "cond_g_grid", "curve_g_grid", "tmix_g_grid",
                   "n_grid", "l_grid", "l_compare", "sampled_dim_min",
                   "sampled_steps_min"),
    "block": ("config", "out", "threads", "chain", "g", "N", "l"),
}


def main(argv=None):
    from .errors import CapacityError, NumericalError, ValidationError
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.version:
            from . import __version__
            print(__version__)
            return 0
        if not args.command:
            parser.print_help(sys.stderr)
            return 1
        file_cfg = _load_config_file(args)
        resolved = _resolve(args, file_cfg, _KEYS[args.command])
        threads = resolved.get("threads")
        if threads is not None:
            if not isinstance(threads, int) or threads < 1:
                raise ValidationError(
                    f"config key threads: need a positive count, got {threads!r}")
            # pin the BLAS pool before any command function imports numpy
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ[var] = str(threads)
        outdir = _outdir(resolved, args.command)
        _write_resolved(outdir, args.command, resolved)
        _DISPATCH[args.command](resolved, outdir)
        return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CapacityError as exc:
        print(f"capacity: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
