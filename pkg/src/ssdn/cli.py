"""Command line entry point.

Exit codes: 0 converged, 1 error, 2 horizon reached without convergence,
3 divergence. Every flag can also be set through an ``SSDN_`` environment
variable (``SSDN_SCENARIO``, ``SSDN_VARIANT``, ``SSDN_H``, ``SSDN_T_END``,
``SSDN_OUT``, ``SSDN_CERTIFY``, ``SSDN_SWEEP``); flags win over the environment.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .dynamics import AssumptionError, DivergenceError, VARIANTS
from .scenario import (EXIT_DIVERGED, EXIT_ERROR, ScenarioError, build_certificate, certify,
                       load_scenario, monitor, run)

log = logging.getLogger("ssdn")

ENV_PREFIX = "SSDN_"


def _env(name, cast=str):
    val = os.environ.get(ENV_PREFIX + name)
    if val is None or val == "":
        return None
    return cast(val)


def _truthy(s):
    return s.strip().lower() in {"1", "true", "yes", "on"}


def build_parser():
    ap = argparse.ArgumentParser(
        prog="ssdn",
        description="Run the distributed double proximal primal-dual dynamics on a scenario.")
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--scenario", help="scenario YAML file or bundled name (e.g. paper_sec6)")
    src.add_argument("--sweep", help="directory of scenario files to run in parallel")
    ap.add_argument("--variant", choices=VARIANTS, help="override the scenario variant")
    ap.add_argument("--h", type=float, help="integration step in seconds")
    ap.add_argument("--t-end", type=float, dest="t_end", help="horizon in seconds")
    ap.add_argument("--out", help="trajectory file (output directory with --sweep)")
    ap.add_argument("--certify", action="store_true", default=None,
                    help="residual report, certificate and Lyapunov monitoring")
    ap.add_argument("--workers", type=int, default=None, help="processes for --sweep")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _resolve(args):
    args.scenario = args.scenario or (None if args.sweep else _env("SCENARIO"))
    args.sweep = args.sweep or (None if args.scenario else _env("SWEEP"))
    args.variant = args.variant or _env("VARIANT")
    args.h = args.h if args.h is not None else _env("H", float)
    args.t_end = args.t_end if args.t_end is not None else _env("T_END", float)
    args.out = args.out or _env("OUT")
    if args.certify is None:
        args.certify = bool(_env("CERTIFY", _truthy))
    if args.variant is not None and args.variant not in VARIANTS:
        raise ScenarioError(f"unknown variant {args.variant!r}", "variant")
    return args


def run_one(path, variant=None, h=None, t_end=None, out=None, do_certify=False):
    """Run a single scenario; return ``(exit_code, text)``."""
    lines = []
    try:
        sc = load_scenario(path)
        sc = sc.replace(variant=variant, h=h, t_end=t_end)
        log.info("%s: alpha=%g gamma=%g h=%g t_end=%g variant=%s", sc.name, *(
            getattr(sc.algorithm_params, k) for k in ("alpha", "gamma", "h", "t_end")), sc.variant)
        summary = run(sc, out=out)
        lines.append(str(summary))
        lines.append(f"  trajectory written to {summary.trajectory_path}")
        if do_certify:
            cert = None
            try:
                cert = build_certificate(sc, summary.trajectory)
            except ValueError as exc:
                lines.append(f"  no equilibrium certificate: {exc}")
            report = certify(sc, summary.trajectory, cert)
            lines.append(f"  certify: {report}")
            if cert is not None:
                cert_path = sc.certificate or f"{summary.trajectory_path}.cert.json"
                cert.save(cert_path)
                lines.append(f"  certificate ({cert.source}, field residual "
                             f"{cert.tolerance:.2e}) written to {cert_path}")
                desc = monitor(sc, cert)
                lines.append(
                    f"  Lyapunov monitor at h = {desc.h:g}: max increase {desc.max_increase:.3e}, "
                    f"{desc.violations} steps above {desc.tolerance:.1e}")
        return summary.exit_code, "\n".join(lines)
    except DivergenceError as exc:
        return EXIT_DIVERGED, f"{path}: diverged: {exc}"
    except (ScenarioError, AssumptionError, ValueError, OSError) as exc:
        return EXIT_ERROR, f"{path}: error: {exc}"


def _sweep(args):
    files = sorted(Path(args.sweep).glob("*.yaml")) + sorted(Path(args.sweep).glob("*.yml"))
    if not files:
        print(f"no scenario files in {args.sweep}", file=sys.stderr)
        return EXIT_ERROR
    out_dir = Path(args.out) if args.out else Path(args.sweep)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(str(f), args.variant, args.h, args.t_end, str(out_dir / f"{f.stem}.csv"),
             args.certify) for f in files]
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(run_one, *zip(*jobs)))
    for _, text in results:
        print(text)
    codes = {code for code, _ in results}
    for worst in (EXIT_ERROR, EXIT_DIVERGED, 2, 0):
        if worst in codes:
            return worst
    return EXIT_ERROR


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args = _resolve(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.sweep:
        return _sweep(args)
    if not args.scenario:
        ap.print_usage(sys.stderr)
        print("error: --scenario or --sweep is required", file=sys.stderr)
        return EXIT_ERROR
    code, text = run_one(args.scenario, args.variant, args.h, args.t_end, args.out,
                         args.certify)
    print(text, file=sys.stderr if code == EXIT_ERROR else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
