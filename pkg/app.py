"""beamchain: stability diagnostics for serially connected Euler-Bernoulli beams.

    python app.py <check|spectrum|sweep|simulate|full> --config scenarios/chen87_m2.json
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import settings
from utils.chain_model import ChainModel, build_chain, normalize
from utils.config_loader import ConfigLoader, analysis_defaults
from utils.discretizer import Grid, assemble, config_hash, export_matrices
from utils.errors import BeamChainError, ConfigError, ModelError, NumericalError, ParseError, SchemaError
from utils.report_builder import HypothesisSection, Report, check_hypotheses, write_frame, write_report
from utils.spectral_helper import eigenvalues, kernel_projection, resolvent_sweep, spectral_abscissa
from utils.time_stepper import default_dt, fit_decay, simulate

logger = logging.getLogger("beamchain")

SUBCOMMANDS = ("check", "spectrum", "sweep", "simulate", "full")
STABLE_VERDICT = "exp-stable-certified-numerically"


# ---- Console helpers ----

def status(ok: bool, message: str):
    print(f"{'✅' if ok else '❌'} {message}")


def warn(message: str):
    print(f"⚠️ {message}")


def artifact(path: str):
    print(f"📄 Wrote {path}")


def format_error(exc: Exception) -> Dict[str, Any]:
    """Turn an exception into the result dict shown to the user."""
    if isinstance(exc, ParseError):
        title = "📝 Configuration is not valid JSON"
    elif isinstance(exc, SchemaError):
        title = "🧩 Configuration schema problem"
    elif isinstance(exc, ConfigError):
        title = "📂 Cannot read configuration"
    elif isinstance(exc, ModelError):
        title = "🏗️ Invalid chain model"
    elif isinstance(exc, NumericalError):
        title = "🔢 Numerical failure"
    elif isinstance(exc, OSError):
        title = "📂 Cannot write results"
    else:
        title = "🔢 Invalid numerical setting"
    return {
        "success": False,
        "error": f"{title}: {exc}",
        "error_type": type(exc).__name__,
    }


def exit_code_for(exc: Exception) -> int:
    if isinstance(exc, BeamChainError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return 3
    return 2


# ---- Settings resolution ----

def resolve_defaults(document: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    """settings.py < scenario `analysis` block < command-line flags."""
    analysis = analysis_defaults(document)

    def pick(flag: str, key: str, fallback: Any) -> Any:
        value = getattr(args, flag, None)
        if value is not None:
            return value
        return analysis.get(key, fallback)

    return {
        "cells": int(pick("cells", "cells", settings.DEFAULT_CELLS)),
        "beta_min": float(analysis.get("beta_min", settings.DEFAULT_BETA_MIN)),
        "beta_max": float(pick("beta_max", "beta_max", settings.DEFAULT_BETA_MAX)),
        "samples": int(analysis.get("samples", settings.DEFAULT_SWEEP_SAMPLES)),
        "T": pick("T", "T", None),
        "dt": pick("dt", "dt", None),
        "t_factor": settings.DEFAULT_T_FACTOR,
        "seed": settings.RANDOM_SEED,
        "tol_psd": settings.TOL_PSD,
    }


# ---- Stages ----

def print_hypotheses(section: HypothesisSection):
    status(section.regularity.passed, "(R) coefficients positive and Lipschitz")
    if section.monotonicity.passed:
        status(True, "(M) jump conditions hold at every junction")
    else:
        for junction in section.monotonicity.junctions:
            for violation in junction.violations:
                status(False, f"(M) junction {junction.junction}: {violation}")
    for side, verdict in section.boundary_passivity.items():
        status(verdict.passed, f"{side} boundary matrices passive (margin {verdict.margin:.3e})")
    for label, verdict in section.controllers.items():
        status(
            verdict.satisfies_assumption,
            f"controller at {label}: passive={verdict.passive}, kappa={verdict.kappa:.6g}, "
            f"kernel inclusion={verdict.kernel_inclusion}",
        )
        if not verdict.internally_stable:
            warn(f"controller at {label} is not internally stable")
    dissipation = section.dissipation
    status(
        dissipation.family != "none",
        f"dissipation class {dissipation.family}"
        + (f" via {dissipation.selector} (kappa {dissipation.kappa:.6g})" if dissipation.selector else ""),
    )
    status(section.hypotheses_hold, "stability hypotheses hold" if section.hypotheses_hold else "stability hypotheses violated")


def run_dynamics(bundle, kernel, abscissa: float, defaults: Dict[str, Any]) -> Tuple[Dict[str, Any], Any]:
    T = defaults["T"]
    if T is None:
        if abscissa < -settings.STABILITY_TOL:
            T = defaults["t_factor"] / abs(abscissa)
        else:
            T = settings.DEFAULT_T_FALLBACK
    T = float(T)
    dt = float(defaults["dt"]) if defaults["dt"] is not None else default_dt(bundle, T)

    rng = np.random.default_rng(defaults["seed"])
    x0 = rng.standard_normal(bundle.dim)
    projected = kernel.dim > 0
    removed_weight = 0.0
    if projected:
        removed_weight = float(np.linalg.norm(kernel.kernel_weight(x0)))
        x0 = kernel.project(x0)

    trace = simulate(bundle, x0, T, dt)
    fit = fit_decay(trace)
    dynamic = fit.to_dict()
    dynamic.update({
        "T": T,
        "dt": dt,
        "projected": projected,
        "removed_kernel_weight": removed_weight,
        "final_energy_ratio": float(trace.energies[-1] / trace.energies[0]),
    })
    return dynamic, trace


def run(subcommand: str, document: Dict[str, Any], args: argparse.Namespace) -> Tuple[Report, int]:
    """Run one subcommand on a validated document; returns the report and exit code."""
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")

    model: ChainModel = build_chain(document)
    defaults = resolve_defaults(document, args)
    out_dir = args.out
    nm = normalize(model)
    grid = Grid(defaults["cells"])

    print(f"🔗 {model.name}: {model.m} segment(s), total length {model.total_length:g}")
    section = check_hypotheses(model)
    print_hypotheses(section)

    report = Report(
        scenario=model.name,
        config_hash=config_hash(nm, grid),
        defaults=defaults,
        hypotheses=section.to_dict(),
    )

    def finish(code: int) -> Tuple[Report, int]:
        artifact(write_report(report, out_dir))
        return report, code

    if subcommand == "check":
        return finish(0 if section.hypotheses_hold else 1)

    if not section.boundary_passive:
        report.notes.append("numerics skipped: boundary matrices are not impedance passive")
        warn("Numerics skipped: boundary matrices are not impedance passive")
        return finish(1)

    bundle = assemble(nm, grid)
    if getattr(args, "export_matrices", False):
        for path in export_matrices(bundle, out_dir):
            artifact(path)

    spectrum = eigenvalues(bundle)
    abscissa = spectral_abscissa(spectrum)
    kernel = kernel_projection(bundle)
    report.spectral = {
        "abscissa": abscissa,
        "kernel_dim": kernel.dim,
        "n_eigenvalues": int(spectrum.eigenvalues.size),
        "max_residual": float(np.max(spectrum.residuals)),
    }
    status(abscissa < -settings.STABILITY_TOL, f"spectral abscissa {abscissa:.6e} (N = {grid.cells_per_segment})")
    if kernel.dim:
        warn(f"generator has a kernel of dimension {kernel.dim}")
    artifact(write_frame(spectrum.to_frame(), out_dir, "spectrum.csv"))

    if subcommand in ("sweep", "full"):
        sweep = resolvent_sweep(bundle, defaults["beta_min"], defaults["beta_max"], defaults["samples"])
        report.spectral["sweep"] = sweep.to_dict()
        status(sweep.is_finite, f"resolvent sup {sweep.sup_estimate:.6g} at beta = {sweep.beta_star:.6g}")
        artifact(write_frame(sweep.to_frame(), out_dir, "sweep.csv"))

    if subcommand in ("simulate", "full"):
        dynamic, trace = run_dynamics(bundle, kernel, abscissa, defaults)
        report.dynamic = dynamic
        status(dynamic["decaying"], f"energy envelope rate eta = {dynamic['eta']:.6e} (M = {dynamic['M']:.4g})")
        artifact(write_frame(trace.to_frame(), out_dir, "energy.csv"))

    verdict = report.verdict
    print(f"🏁 Verdict: {verdict}")
    if subcommand == "full":
        return finish(0 if verdict == STABLE_VERDICT else 1)
    return finish(0)


# ---- Command line ----

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="chain document (JSON)")
    common.add_argument("--cells", type=int, default=None, help="cells per segment")
    common.add_argument("--T", type=float, default=None, help="simulated time span in seconds")
    common.add_argument("--dt", type=float, default=None, help="time step in seconds")
    common.add_argument("--beta-max", dest="beta_max", type=float, default=None, help="upper end of the resolvent sweep")
    common.add_argument("--out", default=settings.DEFAULT_OUTPUT_DIR, help="output directory")
    common.add_argument("--lenient", action="store_true", help="warn about unknown fields instead of failing")
    common.add_argument("--export-matrices", action="store_true", help="write A_h and M_h in Matrix Market format")
    common.add_argument("--log-level", default=settings.LOG_LEVEL, help="logging level")

    parser = argparse.ArgumentParser(
        prog="beamchain",
        description="Stability diagnostics for chains of Euler-Bernoulli beams in port-Hamiltonian form.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "check": "algebraic hypothesis checks only",
        "spectrum": "checks plus the discrete spectrum",
        "sweep": "spectrum plus the imaginary-axis resolvent sweep",
        "simulate": "spectrum plus an energy decay simulation",
        "full": "everything, with a verdict",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def configure_logging(level: str):
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.WARNING), format=settings.LOG_FORMAT)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        loader = ConfigLoader(strict=not args.lenient)
        document = loader.load(args.config)
        for message in loader.warnings:
            warn(message)
        _, code = run(args.command, document, args)
        return code
    except (BeamChainError, OSError, ValueError) as exc:
        result = format_error(exc)
        print(f"❌ {result['error']}")
        logger.debug("%s failed", args.command, exc_info=True)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
