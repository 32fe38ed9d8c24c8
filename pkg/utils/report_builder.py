"""Report assembly, verdict derivation and artifact writers."""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from config.settings import STABILITY_TOL
from utils.chain_model import (
    ChainModel,
    MonotonicityReport,
    RegularityReport,
    check_jump_monotonicity,
    validate_regularity,
)
from utils.passivity_checker import (
    DISCREPANCY_NOTES,
    ControllerVerdict,
    DissipationClass,
    PassivityVerdict,
    check_all_ports,
    classify_dissipation,
    theorem_conditions,
)

logger = logging.getLogger(__name__)

VERDICTS = (
    "exp-stable-certified-numerically",
    "asymptotic-only",
    "rigid-mode",
    "hypotheses-violated",
)

# Families whose selector certifies the full stability statement, not only sigma_p on iR.
FULL_FAMILIES = ("exponential-automatic", "exponential", "asymptotic")


@dataclass
class HypothesisSection:
    regularity: RegularityReport
    monotonicity: MonotonicityReport
    boundary_passivity: Dict[str, PassivityVerdict]
    controllers: Dict[str, ControllerVerdict]
    dissipation: DissipationClass
    conditions: Dict[str, Any]
    notes: List[str] = field(default_factory=list)

    @property
    def boundary_passive(self) -> bool:
        return all(v.passed for v in self.boundary_passivity.values())

    @property
    def hypotheses_hold(self) -> bool:
        return (
            self.regularity.passed
            and self.monotonicity.passed
            and self.boundary_passive
            and all(v.satisfies_assumption for v in self.controllers.values())
            and self.dissipation.family in FULL_FAMILIES
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "regularity": self.regularity.to_dict(),
            "monotonicity": self.monotonicity.to_dict(),
            "boundary_passivity": {k: v.to_dict() for k, v in self.boundary_passivity.items()},
            "controllers": {k: v.to_dict() for k, v in self.controllers.items()},
            "dissipation": self.dissipation.to_dict(),
            "theorem_conditions": self.conditions,
            "hypotheses_hold": self.hypotheses_hold,
            "notes": list(self.notes),
        }


def check_hypotheses(model: ChainModel) -> HypothesisSection:
    """Run every algebraic hypothesis check on a built chain."""
    regularity = validate_regularity(model)
    monotonicity = check_jump_monotonicity(model)
    boundary, controllers = check_all_ports(model)
    dissipation = classify_dissipation(model, controllers, boundary)
    conditions = theorem_conditions(model)
    conditions["R"] = {"holds": regularity.passed}
    conditions["M"] = {"holds": monotonicity.passed}
    conditions["static_feedback_result_applies"] = all(
        conditions[key]["holds"] for key in ("R", "M", "D", "C", "I")
    ) and not model.controllers()
    return HypothesisSection(
        regularity=regularity,
        monotonicity=monotonicity,
        boundary_passivity=boundary,
        controllers=controllers,
        dissipation=dissipation,
        conditions=conditions,
        notes=list(DISCREPANCY_NOTES),
    )


# ---- Verdict ----

def _finite(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def derive_verdict(report: Dict[str, Any]) -> str:
    """Verdict as a pure function of a serialized report."""
    spectral = report.get("spectral") or {}
    if int(spectral.get("kernel_dim", 0) or 0) >= 1:
        return "rigid-mode"
    if not report.get("hypotheses", {}).get("hypotheses_hold", False):
        return "hypotheses-violated"

    abscissa = spectral.get("abscissa")
    sweep = spectral.get("sweep")
    dynamic = report.get("dynamic")
    stable = (
        _finite(abscissa)
        and abscissa < -STABILITY_TOL
        and sweep is not None
        and not sweep.get("has_sentinel", True)
        and _finite(sweep.get("sup_estimate"))
        and (dynamic is None or (_finite(dynamic.get("eta")) and dynamic["eta"] < -STABILITY_TOL))
    )
    return VERDICTS[0] if stable else "asymptotic-only"


@dataclass
class Report:
    scenario: str
    config_hash: str
    defaults: Dict[str, Any]
    hypotheses: Dict[str, Any]
    spectral: Optional[Dict[str, Any]] = None
    dynamic: Optional[Dict[str, Any]] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        body = {
            "scenario": self.scenario,
            "config_hash": self.config_hash,
            "defaults": self.defaults,
            "hypotheses": self.hypotheses,
            "spectral": self.spectral,
            "dynamic": self.dynamic,
            "notes": self.notes,
        }
        body = to_jsonable(body)
        body["verdict"] = derive_verdict(body)
        return body

    @property
    def verdict(self) -> str:
        return self.to_dict()["verdict"]


# ---- Writers ----

def to_jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings "inf", "-inf", "nan"."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def write_report(report: Report, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, indent=2)
    logger.info("Wrote %s", path)
    return path


def write_frame(frame, out_dir: str, name: str) -> str:
    """Write a pandas frame as CSV without the index column."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    frame.to_csv(path, index=False)
    logger.info("Wrote %s", path)
    return path
