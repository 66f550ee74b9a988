"""
Lump Toolkit Command Line
Parameter tables, ground-state solves, surface reconstruction, expansion checks and
profile decomposition, each writing CSV/JSON files plus a manifest into --out
"""

import argparse
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import config
from data_storage import DataStorage, read_field, read_json, read_manifest
from dispersion import dispersion_curve, dispersion_row, ds_coefficients, solve_dispersion
from exceptions import (EXIT_DATA, EXIT_NO_CONVERGENCE, EXIT_OK, EXIT_USAGE, LumpError,
                        NonConvergentTailError, NoConvergenceError, UsageError)
from fields import ComplexField2D, SpectralGrid
from lump_solver import SolverConfig, gaussian_profile, reconstruct_surface, solve_ground_state
from profile_decomp import RESULT_SCHEMA, SEQUENCE_SCHEMA, LatticeSequence, decompose
from reduction import ExpansionVerifier

logger = logging.getLogger(__name__)

VERIFY_CHOICES = ("hf", "k4", "l4", "l3", "approx", "l3grad", "sup", "F", "all")
MIN_EPS_ENTRIES = 3


# ----------------------------------------------------------------- settings

def _dispersion_defaults() -> Dict[str, Any]:
    return {"beta": 0.25, "beta_grid": None, "curve": False, "curve_smax": 10.0, "curve_points": 401}


def _solve_defaults() -> Dict[str, Any]:
    grid = config.get_grid_defaults()
    settings = {"beta": 0.25, "grid": [grid["nx"], grid["nz"]], "box": [grid["lx"], grid["lz"]],
                "format": "csv"}
    settings.update(config.get_solver_defaults())
    settings["offset"] = list(settings["offset"])
    return settings


def _reconstruct_defaults() -> Dict[str, Any]:
    r = config.get_reduction_defaults()
    return {"beta": 0.25, "epsilon": r["epsilon"], "input": None,
            "delta_fraction": r["delta_fraction"], "truncation_limit": r["truncation_limit"],
            "max_modes": r["max_modes"]}


def _verify_defaults() -> Dict[str, Any]:
    r = config.get_reduction_defaults()
    return {"beta": r["verify_beta"], "which": "all", "eps_list": r["eps_list"], "input": None,
            "delta_fraction": r["delta_fraction"], "truncation_limit": r["truncation_limit"],
            "max_modes": r["max_modes"], "verify_grid": r["verify_grid"],
            "verify_box": r["verify_box"], "verify_sigma": r["verify_sigma"]}


def _profile_defaults() -> Dict[str, Any]:
    return {"input": None, "eps_cc": 0.05, "tail_fraction": config.TAIL_FRACTION}


def _grid_arg(text: str) -> List[int]:
    parts = text.lower().split("x")
    try:
        sizes = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 256 or 256x128, got {text!r}")
    if len(sizes) == 1:
        sizes = sizes * 2
    if len(sizes) != 2:
        raise argparse.ArgumentTypeError(f"grid must look like 256 or 256x128, got {text!r}")
    return sizes


def _box_arg(text: str) -> List[float]:
    try:
        lengths = [float(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"box must look like 125.66 or 125.66,62.83, got {text!r}")
    if len(lengths) == 1:
        lengths = lengths * 2
    if len(lengths) != 2:
        raise argparse.ArgumentTypeError(f"box must look like 125.66 or 125.66,62.83, got {text!r}")
    return lengths


def _eps_list_arg(text: str) -> List[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"eps list must be comma separated numbers, got {text!r}")


def _beta_grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise UsageError(f"beta grid must look like lo:hi:n, got {text!r}")


# ----------------------------------------------------------------- commands

def run_dispersion(settings: Dict[str, Any], storage: DataStorage) -> int:
    betas = _beta_grid(settings["beta_grid"]) if settings["beta_grid"] else [settings["beta"]]
    rows = [dispersion_row(float(b)) for b in betas]
    table = pd.DataFrame(rows)
    storage.write_table("dispersion.csv", table)
    print(f"✅ Dispersion table: {len(rows)} row(s) -> {storage.path('dispersion.csv')}")

    if len(rows) > 1:
        decreasing = bool(np.all(np.diff(table["omega"].to_numpy()) < 0))
        marker = "✅" if decreasing else "⚠️"
        print(f"{marker} omega decreasing in beta across the grid: {decreasing}")

    if settings["curve"]:
        s = np.linspace(0.0, float(settings["curve_smax"]), int(settings["curve_points"]))
        frames = []
        for b in betas:
            curve = dispersion_curve(float(b), s)
            frames.append(pd.DataFrame({"beta": float(b), **curve}))
        storage.write_table("curve.csv", pd.concat(frames, ignore_index=True))
        print(f"✅ Phase-speed curve -> {storage.path('curve.csv')}")
    return EXIT_OK


def _solver_config(settings: Dict[str, Any]) -> SolverConfig:
    values = dict(settings)
    values["nx"], values["nz"] = (int(v) for v in values.pop("grid"))
    values["lx"], values["lz"] = (float(v) for v in values.pop("box"))
    return SolverConfig.from_dict(values)


def run_solve_lump(settings: Dict[str, Any], storage: DataStorage) -> int:
    params = solve_dispersion(float(settings["beta"]))
    coeffs = ds_coefficients(params)
    cfg = _solver_config(settings)

    code = EXIT_OK
    try:
        report = solve_ground_state(cfg, coeffs)
    except NoConvergenceError as e:
        if e.report is None:
            raise
        report, code = e.report, EXIT_NO_CONVERGENCE
        print(f"⚠️ {e}")

    document = {"beta": params.beta, "dispersion": params.to_dict(),
                "coefficients": coeffs.to_dict(), **report.summary()}
    storage.write_json("report.json", document, "solve-report/1.0")
    storage.write_field(f"zeta.{settings['format']}", report.zeta)
    storage.write_table("trace.csv", report.trace_frame())

    b = report.breakdown
    marker = "✅" if report.converged else "❌"
    print(f"{marker} Ground state: T0={b.T0:.10g} residual={report.residual:.3e} "
          f"iterations={report.iterations}")
    return code


def run_reconstruct(settings: Dict[str, Any], storage: DataStorage) -> int:
    if not settings["input"]:
        raise UsageError("reconstruct needs --in pointing at a zeta field file")
    zeta = read_field(settings["input"])
    if not isinstance(zeta, ComplexField2D):
        zeta = zeta.as_complex()
    params = solve_dispersion(float(settings["beta"]))
    coeffs = ds_coefficients(params)

    result = reconstruct_surface(zeta, float(settings["epsilon"]), params, coeffs,
                                 delta_fraction=float(settings["delta_fraction"]),
                                 truncation_limit=float(settings["truncation_limit"]),
                                 max_modes=int(settings["max_modes"]))
    storage.write_field("eta.csv", result.eta)
    storage.write_field("eta1.csv", result.eta1)
    storage.write_field("f_eta1.csv", result.eta2_approx)
    summary = {"beta": params.beta, "lambda": params.lambda_crit, **result.summary()}
    storage.write_json("summary.json", summary, "reconstruction/1.0")

    marker = "✅" if summary["spectra_disjoint"] else "⚠️"
    print(f"{marker} Surface at epsilon={result.epsilon_effective:.6g}: "
          f"c={result.wave_speed:.10g}, spectra disjoint: {summary['spectra_disjoint']}")
    return EXIT_OK


def _verification_envelope(settings: Dict[str, Any]) -> ComplexField2D:
    if settings["input"]:
        zeta = read_field(settings["input"])
        return zeta if isinstance(zeta, ComplexField2D) else zeta.as_complex()
    n, box, sigma = int(settings["verify_grid"]), float(settings["verify_box"]), float(settings["verify_sigma"])
    return gaussian_profile(SpectralGrid(n, n, box, box), 1.0, sigma, sigma)


def _selected_reports(verifier: ExpansionVerifier, which: str, eps: List[float]) -> Dict[str, Any]:
    single: Dict[str, Callable] = {
        "hf": verifier.hf_corollary,
        "k4": verifier.k4_lemma,
        "l4": verifier.l4_lemma,
        "l3": verifier.l3_lemma,
        "l3grad": verifier.l3_gradient_expansion,
        "sup": verifier.sup_estimate,
        "F": verifier.F_estimate,
    }
    chosen = list(single) + ["approx"] if which == "all" else [which]
    reports = {}
    for name in chosen:
        if name == "approx":
            reports.update({f"approx_{k}": v for k, v in verifier.approx_identities(eps).items()})
        else:
            reports[name] = single[name](eps)
    return reports


def run_verify(settings: Dict[str, Any], storage: DataStorage) -> int:
    which = settings["which"]
    if which not in VERIFY_CHOICES:
        raise UsageError(f"--which must be one of {VERIFY_CHOICES}, got {which!r}")
    eps = settings["eps_list"]
    eps = _eps_list_arg(eps) if isinstance(eps, str) else [float(e) for e in eps]
    if len(eps) < MIN_EPS_ENTRIES:
        raise UsageError(f"--eps-list needs at least {MIN_EPS_ENTRIES} entries, got {len(eps)}")

    params = solve_dispersion(float(settings["beta"]))
    verifier = ExpansionVerifier(_verification_envelope(settings), params,
                                 delta_fraction=float(settings["delta_fraction"]),
                                 truncation_limit=float(settings["truncation_limit"]),
                                 max_modes=int(settings["max_modes"]))
    for name, report in _selected_reports(verifier, which, eps).items():
        storage.write_table(f"{name}.csv", report.to_frame())
        storage.write_json(f"{name}.json", report.to_dict(), "convergence-report/1.0")
        marker = "✅" if report.passed else "⚠️"
        print(f"{marker} {name}: fitted order {report.fitted_order:.3f} "
              f"(threshold {report.order_threshold}), monotone {report.monotone}")
    return EXIT_OK


def run_profile_decompose(settings: Dict[str, Any], storage: DataStorage) -> int:
    if not settings["input"]:
        raise UsageError("profile-decompose needs --in pointing at a sequence file")
    seq = LatticeSequence.from_dict(read_json(settings["input"], SEQUENCE_SCHEMA))

    code = EXIT_OK
    try:
        result = decompose(seq, float(settings["eps_cc"]), float(settings["tail_fraction"]))
    except NonConvergentTailError as e:
        result, code = e.result, EXIT_DATA
        print(f"❌ Tail not profile-like: {e}")

    storage.write_json("profiles.json", result.to_dict(), RESULT_SCHEMA)
    storage.write_table("tracks.csv", result.tracks_frame())
    storage.write_json("summary.json", result.summary(), "decomposition-summary/1.0")
    if code == EXIT_OK:
        print(f"✅ {result.m} profile(s), residual sup {result.residual_sup:.3e}, "
              f"norm gap {result.norm_gap:.3e}")
    return code


COMMANDS: Dict[str, Tuple[Callable[[], Dict[str, Any]], Callable[[Dict[str, Any], DataStorage], int]]] = {
    "dispersion": (_dispersion_defaults, run_dispersion),
    "solve-lump": (_solve_defaults, run_solve_lump),
    "reconstruct": (_reconstruct_defaults, run_reconstruct),
    "verify": (_verify_defaults, run_verify),
    "profile-decompose": (_profile_defaults, run_profile_decompose),
}


# ----------------------------------------------------------------- parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lump", description="Davey-Stewartson lump toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", default=None, help="Output directory (default: $LUMP_OUTPUT_ROOT/<command>)")
        p.add_argument("--config", default=None, help="JSON config file; flags override its values")
        p.add_argument("--log-level", default=None,
                       choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level")
        return p

    p = add("dispersion", "Tabulate omega, Lambda and the DS coefficients")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--beta-grid", default=None, help="lo:hi:n")
    p.add_argument("--curve", action="store_true", default=None, help="Also write c^2(s)")
    p.add_argument("--curve-smax", type=float, default=None)
    p.add_argument("--curve-points", type=int, default=None)

    p = add("solve-lump", "Compute a DS ground state")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--grid", type=_grid_arg, default=None, help="N or NxM")
    p.add_argument("--box", type=_box_arg, default=None, help="L or Lx,Lz")
    p.add_argument("--tol", dest="tol_residual", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--step-rule", choices=["fixed", "adaptive-BB"], default=None)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--recentre-every", type=int, default=None)
    p.add_argument("--amplitude", type=float, default=None)
    p.add_argument("--perturbation", type=float, default=None)
    p.add_argument("--format", choices=["csv", "bin"], default=None)

    p = add("reconstruct", "Build the free surface from a DS envelope")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--in", dest="input", required=True, help="zeta field file (.csv or .bin)")
    p.add_argument("--delta-fraction", type=float, default=None)

    p = add("verify", "Convergence checks of the wavepacket expansions")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--which", choices=VERIFY_CHOICES, default=None)
    p.add_argument("--eps-list", type=_eps_list_arg, default=None, help="e.g. 0.2,0.1,0.05")
    p.add_argument("--in", dest="input", default=None, help="Envelope file; default is a Gaussian")
    p.add_argument("--delta-fraction", type=float, default=None)

    p = add("profile-decompose", "Profile decomposition of a lattice sequence")
    p.add_argument("--in", dest="input", required=True, help="lattice-sequence JSON file")
    p.add_argument("--eps-cc", type=float, default=None)
    p.add_argument("--tail-fraction", type=float, default=None)

    p = sub.add_parser("replay", help="Re-run a command from its manifest")
    p.add_argument("manifest", help="manifest.json of an earlier run")
    p.add_argument("--out", default=None, help="Output directory (default: <run dir>/replay)")
    p.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser


COMMON_KEYS = {"command", "out", "config", "log_level", "manifest"}


def _resolve_settings(command: str, file_settings: Dict[str, Any],
                      flags: Dict[str, Any]) -> Dict[str, Any]:
    """defaults <- config file <- flags; input paths made absolute for replay"""
    defaults = COMMANDS[command][0]()
    allowed = set(defaults)
    settings = config.merge_config(defaults, file_settings, allowed)
    settings = config.merge_config(settings, flags, allowed)
    if settings.get("input"):
        settings["input"] = str(Path(settings["input"]).resolve())
    return settings


def _plan(args: argparse.Namespace) -> Tuple[str, Dict[str, Any], Path]:
    if args.command == "replay":
        manifest = read_manifest(args.manifest)
        command = manifest["command"]
        if command not in COMMANDS:
            raise UsageError(f"manifest names unknown command {command!r}")
        settings = _resolve_settings(command, manifest["config"], {})
        out = Path(args.out) if args.out else Path(args.manifest).resolve().parent / "replay"
        return command, settings, out

    flags = {k: v for k, v in vars(args).items() if k not in COMMON_KEYS}
    settings = _resolve_settings(args.command, config.load_config_file(args.config), flags)
    out = Path(args.out) if args.out else config.get_output_root() / args.command
    return args.command, settings, out


def _configure_logging(level: Optional[str]):
    logging.basicConfig(level=getattr(logging, (level or config.LOG_LEVEL).upper(), logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s: %(message)s", force=True)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run one command and write its manifest

    Returns:
        0 success, 2 usage/domain, 3 non-convergence, 4 resolution/data failure
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    _configure_logging(args.log_level)

    storage = None
    command, settings = args.command, {}
    start = time.perf_counter()
    code = EXIT_OK
    try:
        command, settings, out = _plan(args)
        storage = DataStorage(str(out))
        code = COMMANDS[command][1](settings, storage)
    except LumpError as e:
        code = e.exit_code
        print(f"❌ {type(e).__name__}: {e}")
        fraction = getattr(e, "truncated_fraction", None)
        if fraction is not None and not math.isnan(fraction):
            print(f"   truncated spectral mass: {fraction:.3%}")
        logger.debug("command %s failed", command, exc_info=True)
    finally:
        if storage is not None:
            storage.write_manifest(command, settings, config.TOOL_VERSION,
                                   time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
