"""Command-line entry point: ``levyaa {check,simulate,automorphy,report}``.

Exit codes: 0 success, 1 hypothesis/convergence/automorphy failure,
2 usage error (bad scenario, bad flags, incompatible inputs).
The default output root is ``$LEVYAA_OUTPUT_ROOT`` or ``./levyaa_output``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from .hypotheses import DEFAULT_SUP_STEP, DEFAULT_SUP_WINDOW, check_hypotheses
from .metrics import AutomorphyReport, automorphy_profile, write_svg_chart
from .pipeline import (RunManifest, explicit_shifts, profile_times, read_ensemble,
                       run_automorphy, self_convergence, write_ensemble)
from .scenario import ScenarioError, load_scenario
from .solver import ConvergenceError, GridSpec, ensemble_run

log = logging.getLogger("levyaa")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
OUTPUT_ROOT_ENV = "LEVYAA_OUTPUT_ROOT"
REPORT_FILES = {
    "csv": "automorphy.csv",
    "summary": "automorphy_summary.txt",
    "json": "automorphy.json",
    "svg": "automorphy.svg",
}
HYPOTHESIS_FILE = "hypotheses.yaml"


class UsageError(Exception):
    pass


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "levyaa_output"))


def _load(args):
    try:
        return load_scenario(args.scenario, args.set or ())
    except ScenarioError as e:
        raise UsageError(f"cannot load scenario: {e}") from None


def _grid(args) -> GridSpec:
    try:
        return GridSpec(args.t0, args.t1, args.dt, args.burn_in)
    except ValueError as e:
        raise UsageError(f"invalid grid: {e}") from None


# ------------------------------------------------------------------ check


def cmd_check(args) -> int:
    scn = _load(args)
    r_grid = np.logspace(np.log10(args.r_min), np.log10(args.r_max), args.r_points)
    report = check_hypotheses(scn, r_grid, args.sup_window, args.sup_step)
    out = (Path(args.out) if args.out
           else output_root() / f"{scn.name}_{scn.hash}" / HYPOTHESIS_FILE)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write(out)
    print(report.summary_line())
    print(f"report: {out}")
    return EXIT_OK if report.all_pass else EXIT_FAIL


# --------------------------------------------------------------- simulate


def _simulate(scn, grid, n_paths, seed, tol, max_iter, workers, out: Path,
              convergence_paths: int = 0) -> RunManifest:
    t0 = time.perf_counter()
    paths = ensemble_run(scn, grid, n_paths, seed, tol, max_iter, workers)
    t1 = time.perf_counter()
    outputs = write_ensemble(out, paths)
    t2 = time.perf_counter()
    manifest = RunManifest(scn.name, scn.hash, scn.to_dict(), seed, grid.to_dict(), n_paths,
                           tol, max_iter, outputs, [p.iterations for p in paths],
                           {"solve_s": t1 - t0, "write_s": t2 - t1})
    if convergence_paths:
        conv = self_convergence(scn, grid, seed, convergence_paths)
        manifest.self_convergence = conv.to_dict()
        manifest.timings["self_convergence_s"] = time.perf_counter() - t2
    manifest.write(out)
    return manifest


def cmd_simulate(args) -> int:
    if args.replay:
        try:
            src = RunManifest.read(args.replay)
            scn = src.load_scenario()
            grid = src.grid_spec()
        except (OSError, ValueError, TypeError, KeyError, ScenarioError) as e:
            raise UsageError(f"cannot replay {args.replay}: {e}") from None
        n_paths, seed, tol, max_iter = src.n_paths, src.seed, src.tol, src.max_iter
        conv_paths = src.self_convergence["n_paths"] if src.self_convergence else 0
    else:
        if args.scenario is None:
            raise UsageError("simulate needs a scenario or --replay")
        scn = _load(args)
        grid = _grid(args)
        n_paths, seed, tol, max_iter = args.paths, args.seed, args.tol, args.max_iter
        conv_paths = args.convergence_paths if args.convergence_check else 0
    if n_paths < 1:
        raise UsageError("--paths must be >= 1")
    out = Path(args.out) if args.out else output_root() / f"{scn.name}_{scn.hash}_seed{seed}"
    try:
        manifest = _simulate(scn, grid, n_paths, seed, tol, max_iter, args.workers, out,
                             conv_paths)
    except ConvergenceError as e:
        print(f"convergence failure: {e}", file=sys.stderr)
        return EXIT_FAIL
    print(f"wrote {n_paths} paths to {out} (scenario {scn.hash}, seed {seed})")
    if manifest.self_convergence:
        sc = manifest.self_convergence
        print(f"self-convergence ratio {sc['ratio']:.4f} "
              f"({'PASS' if sc['passed'] else 'FAIL'}, band {sc['band']})")
    return EXIT_OK


# ------------------------------------------------------------- automorphy


def _emit_report(report: AutomorphyReport, out: Path, svg: bool):
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / REPORT_FILES["csv"])
    (out / REPORT_FILES["summary"]).write_text(report.summary())
    (out / REPORT_FILES["json"]).write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    if svg:
        write_svg_chart(report, out / REPORT_FILES["svg"])
    print(report.summary(), end="")


def _ensembles_report(args) -> AutomorphyReport:
    loaded = []
    for d in args.ensembles:
        try:
            loaded.append(read_ensemble(d))
        except (OSError, ValueError, TypeError, KeyError) as e:
            raise UsageError(f"cannot read ensemble {d}: {e}") from None
    if len(loaded) < 3:
        raise UsageError("need a base ensemble plus at least one shift and its control")
    ref, base = loaded[0]
    ref_grid = ref.grid_spec()
    span = ref_grid.t_end - ref_grid.t_start
    for (man, _), d in zip(loaded[1:], args.ensembles[1:]):
        g = man.grid_spec()
        if man.scenario_hash != ref.scenario_hash:
            raise UsageError(f"{d}: scenario hash {man.scenario_hash} != {ref.scenario_hash}")
        if man.seed != ref.seed or man.n_paths != ref.n_paths:
            raise UsageError(f"{d}: seed/path count differ from the base ensemble")
        if (g.dt != ref_grid.dt or g.burn_in != ref_grid.burn_in
                or abs((g.t_end - g.t_start) - span) > 1e-9 * max(1.0, span)
                or man.tol != ref.tol):
            raise UsageError(f"{d}: grid or tolerance differs from the base ensemble")
    scn = ref.load_scenario()
    taus = sorted(m.grid["t_start"] - ref_grid.t_start for m, _ in loaded[1:])
    off = args.control_offset

    def present(x):
        return any(abs(x - t) <= 1e-9 * max(1.0, abs(x)) for t in taus)

    shift_taus = [t for t in taus if not present(t - off)]
    if not shift_taus:
        raise UsageError("no recurrence shifts among the ensembles")
    shifts = explicit_shifts(scn, shift_taus)
    if not present(shifts.best + off):
        raise UsageError(f"missing control ensemble at tau={shifts.best + off}")
    shifted = {m.grid["t_start"] - ref_grid.t_start: p for m, p in loaded[1:]}
    try:
        return automorphy_profile(scn.coefficients.forcing_frequencies(), base, shifted, shifts,
                                  profile_times(ref_grid, args.t_step), args.projection, off,
                                  args.pass_fraction, args.method)
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_automorphy(args) -> int:
    if args.ensembles:
        if args.scenario:
            raise UsageError("give either a scenario or --ensembles, not both")
        report = _ensembles_report(args)
        out = Path(args.out) if args.out else Path(args.ensembles[0]) / "automorphy"
    else:
        if args.scenario is None:
            raise UsageError("automorphy needs a scenario or --ensembles")
        scn = _load(args)
        grid = _grid(args)
        shifts = None
        if args.shifts:
            shifts = explicit_shifts(scn, args.shifts)
        elif not scn.coefficients.forcing_frequencies():
            raise UsageError("scenario has no forcing frequencies; pass --shifts")
        out = (Path(args.out) if args.out
               else output_root() / f"automorphy_{scn.name}_{scn.hash}_seed{args.seed}")
        try:
            exp = run_automorphy(scn, grid, args.paths, args.seed, args.horizon, args.count,
                                 args.control_offset, args.t_step, args.projection,
                                 args.pass_fraction, shifts, args.method, tol=args.tol,
                                 max_iter=args.max_iter, workers=args.workers)
        except ConvergenceError as e:
            print(f"convergence failure: {e}", file=sys.stderr)
            return EXIT_FAIL
        except ValueError as e:
            raise UsageError(str(e)) from None
        report = exp.report
        if args.save_ensembles:
            _save_windows(scn, grid, args, exp, out / "ensembles")
    _emit_report(report, out, args.svg)
    print(f"report: {out}")
    return EXIT_OK if report.passed else EXIT_FAIL


def _save_windows(scn, grid, args, exp, root: Path):
    windows = [(0.0, exp.base)] + sorted(exp.shifted.items())
    for k, (tau, paths) in enumerate(windows):
        g = grid.shifted(tau)
        d = root / f"window_{k:02d}"
        outputs = write_ensemble(d, paths)
        RunManifest(scn.name, scn.hash, scn.to_dict(), args.seed, g.to_dict(), len(paths),
                    args.tol, args.max_iter, outputs, [p.iterations for p in paths]).write(d)


# ----------------------------------------------------------------- report


def cmd_report(args) -> int:
    d = Path(args.directory)
    found = False
    hyp = d / HYPOTHESIS_FILE
    if hyp.is_file():
        found = True
        data = yaml.safe_load(hyp.read_text())
        print(f"hypotheses: {'PASS' if data['all_pass'] else 'FAIL'} "
              f"vartheta={data['vartheta']:.6g}")
    if (d / "manifest.json").is_file():
        found = True
        man = RunManifest.read(d)
        print(f"ensemble: scenario={man.scenario_name} hash={man.scenario_hash} "
              f"seed={man.seed} paths={man.n_paths} grid={man.grid}")
        if man.self_convergence:
            print(f"self-convergence ratio: {man.self_convergence['ratio']:.4f}")
    rep_json = d / REPORT_FILES["json"]
    if rep_json.is_file():
        found = True
        report = AutomorphyReport.from_dict(json.loads(rep_json.read_text()))
        print(report.summary(), end="")
        svg = Path(args.svg) if args.svg else d / REPORT_FILES["svg"]
        write_svg_chart(report, svg)
        print(f"chart: {svg}")
    if not found:
        raise UsageError(f"nothing to report in {d}")
    return EXIT_OK


# ----------------------------------------------------------------- parser


def _scenario_args(p, optional=False):
    p.add_argument("scenario", nargs="?" if optional else None,
                   help="scenario YAML file or builtin name")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a scenario field, e.g. coefficients.delta=0.3")


def _grid_args(p, t1, burn_in):
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, default=t1)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--burn-in", type=float, default=burn_in)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levyaa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="evaluate the Lipschitz, growth and contraction conditions")
    _scenario_args(p)
    p.add_argument("--out", help="report YAML path")
    p.add_argument("--r-min", type=float, default=1e-3)
    p.add_argument("--r-max", type=float, default=1e3)
    p.add_argument("--r-points", type=int, default=121)
    p.add_argument("--sup-window", type=float, default=DEFAULT_SUP_WINDOW)
    p.add_argument("--sup-step", type=float, default=DEFAULT_SUP_STEP)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="solve an ensemble of mild solutions")
    _scenario_args(p, optional=True)
    _grid_args(p, t1=10.0, burn_in=3.0)
    p.add_argument("--paths", type=int, default=16)
    p.add_argument("--out", help="ensemble directory")
    p.add_argument("--convergence-check", action="store_true",
                   help="record a dt vs dt/2 self-convergence check in the manifest")
    p.add_argument("--convergence-paths", type=int, default=16)
    p.add_argument("--replay", metavar="MANIFEST",
                   help="rerun exactly the run described by a manifest (file or directory)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("automorphy", help="compare laws along recurrence shifts")
    _scenario_args(p, optional=True)
    _grid_args(p, t1=4.0, burn_in=2.0)
    p.add_argument("--ensembles", nargs="+", metavar="DIR",
                   help="stored ensembles; the first is the base window")
    p.add_argument("--paths", type=int, default=256)
    p.add_argument("--horizon", type=float, default=200.0)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--shifts", type=float, nargs="+", help="explicit shifts instead of a search")
    p.add_argument("--control-offset", type=float, default=0.5)
    p.add_argument("--t-step", type=float, default=0.25)
    p.add_argument("--projection", type=int, default=8)
    p.add_argument("--pass-fraction", type=float, default=0.7)
    p.add_argument("--method", choices=("auto", "lp", "transport"), default="auto")
    p.add_argument("--out", help="report directory")
    p.add_argument("--svg", action="store_true", help="also write an SVG chart")
    p.add_argument("--save-ensembles", action="store_true",
                   help="store every simulated window with its manifest")
    p.set_defaults(func=cmd_automorphy)

    p = sub.add_parser("report", help="summarise an output directory")
    p.add_argument("directory")
    p.add_argument("--svg", help="chart path (default: inside the directory)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
