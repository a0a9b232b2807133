"""Command line entry point.

Exit codes: 0 success, 1 a check ran and failed, 2 config error,
3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import highdim, noise, runner, tiltedchsh, tomo
from .bell import CorrelationTable, born_table, check_no_signalling
from .qcore import SchmidtState, StateError, purity, target_ket

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4


def _formats(text: str) -> tuple[str, ...]:
    fmts = tuple(f.strip() for f in text.split(",") if f.strip())
    for f in fmts:
        if f not in ("json", "csv"):
            raise argparse.ArgumentTypeError(f"unknown format {f!r}")
    return fmts


def _coeffs(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


def _add_state_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--theta", type=float, help="two-qubit state cos(t)|00> + sin(t)|11>")
    g.add_argument("--coeffs", type=_coeffs, help="comma-separated Schmidt coefficients (d = 3 or 4)")
    p.add_argument("--visibility", type=float, help="white-noise visibility v")
    p.add_argument("--purity", type=float, help="calibrate white noise to this purity")
    p.add_argument("--dephasing", type=float, help="dephasing strength lambda")
    p.add_argument("--samples", type=int, help="samples per setting (default: exact probabilities)")


def _state_from_args(args) -> tuple[np.ndarray, object, noise.NoiseSpec]:
    spec = noise.NoiseSpec(
        white_noise_v=args.visibility,
        dephasing_lambda=args.dephasing,
        samples_per_setting=args.samples if args.samples else "exact",
        target_purity=args.purity,
    )
    if args.coeffs is not None:
        state = SchmidtState.normalized(args.coeffs)
        return noise.apply_noise(state.rho, spec), state, spec
    theta = math.pi / 4 if args.theta is None else args.theta
    psi = target_ket(theta)
    return noise.apply_noise(np.outer(psi, psi.conj()), spec), theta, spec


def _print_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True, indent=1))


def cmd_run(args) -> int:
    cfg = runner.load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if args.format is not None:
        overrides["formats"] = args.format
    if args.reoptimize:
        overrides["reoptimize"] = True
    cfg = dataclasses.replace(cfg, **overrides)
    report = runner.run_experiment(cfg)
    for path in runner.emit_report(report, cfg.formats, cfg.out_dir, cfg.stem):
        print(path)
    return EXIT_OK


def _load_table(path: str) -> CorrelationTable:
    text = Path(path).read_text()
    if path.endswith(".csv"):
        return CorrelationTable.from_csv(text)
    return CorrelationTable.from_json(text)


def cmd_selftest(args) -> int:
    if args.table:
        table = _load_table(args.table)
        if table.scenario.settings_A == 2:
            _print_json(tiltedchsh.extract_theta(table).to_dict())
        else:
            est = highdim.reconstruct_coefficients(table, table.scenario.outcomes, mode=args.mode)
            _print_json(est.to_dict())
        return EXIT_OK

    rho, target, spec = _state_from_args(args)
    seed = args.seed or 0
    if isinstance(target, SchmidtState):
        settings = highdim.build_qudit_settings(target)
    else:
        settings = tiltedchsh.optimal_settings(target)
    table = born_table(rho, settings.alice, settings.bob)
    if not spec.exact:
        table = noise.sample_counts(table, spec.samples_per_setting, seed)
    if args.save_table:
        Path(args.save_table).write_text(table.to_csv() if args.save_table.endswith(".csv") else table.to_json())
    if isinstance(target, SchmidtState):
        est = highdim.reconstruct_coefficients(table, target.d, mode=args.mode, reference=target)
        out = est.to_dict()
    else:
        ext = tiltedchsh.extract_theta(table)
        out = ext.to_dict()
        if not settings.degenerate:
            out["F_S"] = tiltedchsh.swap_fidelity(rho, settings, ext.theta)
    out["purity"] = purity(rho)
    _print_json(out)
    return EXIT_OK


def cmd_tomograph(args) -> int:
    rho, target, spec = _state_from_args(args)
    d = target.d if isinstance(target, SchmidtState) else 2
    basis = tomo.tomo_projectors(d)
    probs = tomo.tomography_probabilities(rho, basis)
    if not spec.exact:
        probs = tomo.sample_tomography(probs, spec.samples_per_setting, args.seed or 0)
    fit = tomo.fit_density(probs, d)
    out = tomo.schmidt_readout(fit.rho, d).to_dict()
    out.update(
        measurements=basis.joint_count,
        purity=purity(fit.rho),
        projection_distance=fit.projection_distance,
    )
    if args.save_rho:
        Path(args.save_rho).write_text(tomo.density_to_json(fit.rho))
    _print_json(out)
    return EXIT_OK


def cmd_check_ns(args) -> int:
    table = _load_table(args.table)
    rep = check_no_signalling(table, args.tol)
    _print_json(rep.to_dict())
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def cmd_report(args) -> int:
    report = runner.load_report(args.report)
    out_dir = args.out_dir or str(Path(args.report).parent)
    stem = Path(args.report).stem
    for path in runner.emit_report(report, args.format or ("csv",), out_dir, stem):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qselftest", description="Self-testing of bipartite entangled states.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--out-dir")
    r.add_argument("--format", type=_formats, help="comma-separated: json,csv")
    r.add_argument("--reoptimize", action="store_true", help="find settings by see-saw for rotated states")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("selftest", help="self-test one state or a stored table")
    _add_state_args(s)
    s.add_argument("--table", help="CorrelationTable JSON or CSV to analyse instead of simulating")
    s.add_argument("--save-table", help="write the simulated table (.json or .csv)")
    s.add_argument("--mode", choices=["primary", "least_squares"], default="primary")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_selftest)

    t = sub.add_parser("tomograph", help="tomography oracle for one state")
    _add_state_args(t)
    t.add_argument("--save-rho", help="write the reconstructed density matrix as JSON")
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_tomograph)

    n = sub.add_parser("check-ns", help="no-signalling check of a stored table")
    n.add_argument("table")
    n.add_argument("--tol", type=float, help="default: 1e-12 exact, 5/sqrt(N) sampled")
    n.set_defaults(func=cmd_check_ns)

    rp = sub.add_parser("report", help="re-render a stored JSON report")
    rp.add_argument("report")
    rp.add_argument("--out-dir")
    rp.add_argument("--format", type=_formats)
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except runner.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (runner.NumericError, StateError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
