"""Command-line entry point ``p2np``."""

import argparse
import logging
import sys

from . import __version__
from ._validation import ContractError
from .config import ConfigError

EXIT_FAILED_CHECKS = 1


def _cmd_run(args):
    from .experiment import run_experiment
    result = run_experiment(args.config)
    for row in result.summary:
        hit = row["iters_to_reference"]
        print(f"{row['solver']:<16} {row['status']:<9} best {row['best_psnr_db']:7.2f} dB  "
              f"reaches reference at {hit if hit else '-'}")
    print(f"outputs in {result.output_dir}")
    return result.exit_code


def _cmd_phantom(args):
    from .io import write_image_pgm
    from .phantom import make_phantom
    img = make_phantom(args.size, args.kind, args.phase, args.seed)
    write_image_pgm(img, args.output)
    return 0


def _cmd_traj(args):
    from .io import write_trajectory_csv
    from .mri import make_radial_trajectory, make_spiral_trajectory
    if args.kind == "radial":
        traj = make_radial_trajectory(args.spokes, args.readout, not args.uniform)
    else:
        traj = make_spiral_trajectory(args.interleaves, args.readout, args.grid_size)
    write_trajectory_csv(args.output, traj)
    return 0


def _cmd_check(args):
    from .checks import run_checks
    results = run_checks()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return 0 if all(r.passed for r in results) else EXIT_FAILED_CHECKS


def build_parser():
    p = argparse.ArgumentParser(prog="p2np", description="Preconditioned plug-and-play MRI reconstruction")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config")
    run.set_defaults(func=_cmd_run)

    ph = sub.add_parser("phantom", help="write a test image as a 16-bit PGM")
    ph.add_argument("--size", type=int, required=True)
    ph.add_argument("--kind", default="shepp-logan", choices=("shepp-logan", "blobs"))
    ph.add_argument("--phase", default="none", choices=("none", "smooth"))
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("-o", "--output", required=True)
    ph.set_defaults(func=_cmd_phantom)

    tr = sub.add_parser("traj", help="write a k-space trajectory as kx,ky CSV")
    tr.add_argument("kind", choices=("radial", "spiral"))
    tr.add_argument("--spokes", type=int, default=21)
    tr.add_argument("--interleaves", type=int, default=6)
    tr.add_argument("--readout", type=int, required=True)
    tr.add_argument("--grid-size", type=int, default=None, help="spiral matrix size (sets turns)")
    tr.add_argument("--uniform", action="store_true", help="uniform instead of golden-angle spokes")
    tr.add_argument("-o", "--output", required=True)
    tr.set_defaults(func=_cmd_traj)

    ck = sub.add_parser("check", help="run the built-in invariant checks")
    ck.set_defaults(func=_cmd_check)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which doubles as our config-error code
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
