"""Algebraic hypothesis checks: boundary passivity, controllers, dissipation class."""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg

from config.settings import RANK_TOL, TOL_BISECT, TOL_PSD
from utils.chain_model import (
    ChainModel,
    ControllerSpec,
    EndConditionSpec,
    hermitian_part,
)
from utils.errors import SingularBoundaryMatrix
from utils.port_maps import (
    ASYMPTOTIC_SELECTORS,
    AUTOMATIC_SELECTORS,
    EXPONENTIAL_SELECTORS,
    SIGMA,
    ZERO_ONLY_SELECTORS,
    PortMap,
    end_port,
    selector_rows,
)

logger = logging.getLogger(__name__)


@dataclass
class PassivityVerdict:
    passed: bool
    margin: float
    witness: Optional[List[complex]] = None
    witness_value: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        witness = None
        if self.witness is not None:
            witness = [[float(np.real(w)), float(np.imag(w))] for w in self.witness]
        return {
            "pass": self.passed,
            "margin": self.margin,
            "witness": witness,
            "witness_value": self.witness_value,
        }


@dataclass
class ControllerVerdict:
    passive: bool
    kappa: float
    kernel_inclusion: bool
    internally_stable: bool
    spectral_abscissa_Ac: float
    kappa_output: float = 0.0
    passivity_margin: float = 0.0

    @property
    def satisfies_assumption(self) -> bool:
        return self.passive and self.kernel_inclusion

    def to_dict(self) -> Dict[str, Any]:
        abscissa = self.spectral_abscissa_Ac
        return {
            "passive": self.passive,
            "kappa": self.kappa,
            "kappa_output": self.kappa_output,
            "kernel_inclusion": self.kernel_inclusion,
            "internally_stable": self.internally_stable,
            "spectral_abscissa_Ac": None if not np.isfinite(abscissa) else abscissa,
            "passivity_margin": self.passivity_margin,
        }


@dataclass
class DissipationClass:
    family: str
    selector: Optional[str]
    components: Tuple[str, ...]
    kappa: float
    damping_margin: float = 0.0
    certified: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        def clean(value):
            return "inf" if np.isinf(value) else value

        return {
            "family": self.family,
            "selector": self.selector,
            "components": list(self.components),
            "kappa": clean(self.kappa),
            "damping_margin": self.damping_margin,
            "certified": {k: clean(v) for k, v in self.certified.items()},
        }


# ---- Helpers ----

def _psd_margin(Q: np.ndarray) -> Tuple[float, np.ndarray]:
    values, vectors = linalg.eigh(hermitian_part(Q))
    return float(values[0]), vectors[:, 0]


def _scale(Q: np.ndarray) -> float:
    return max(1.0, float(np.linalg.norm(Q, 2))) if Q.size else 1.0


def _smallest_positive_eigenvalue(E: np.ndarray) -> float:
    values = linalg.eigvalsh(hermitian_part(E))
    positive = values[values > RANK_TOL * max(1.0, float(np.max(np.abs(values))))]
    return float(positive[0]) if positive.size else 0.0


def largest_kappa(
    feasible: Callable[[float], bool],
    kappa_max: float,
    tol: float = TOL_BISECT,
) -> float:
    """Bisection for the largest kappa in [0, kappa_max] with feasible(kappa)."""
    if not feasible(0.0):
        return 0.0
    if feasible(kappa_max):
        return kappa_max
    lo, hi = 0.0, kappa_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _nsd_feasible(Q: np.ndarray, E: np.ndarray) -> Callable[[float], bool]:
    """kappa -> Q + kappa E is negative semidefinite."""
    scale = _scale(Q)

    def feasible(kappa: float) -> bool:
        return float(linalg.eigvalsh(hermitian_part(Q + kappa * E))[-1]) <= TOL_PSD * scale

    return feasible


def _rank(M: np.ndarray, reference: float) -> int:
    if M.size == 0:
        return 0
    s = linalg.svdvals(M)
    return int(np.sum(s > RANK_TOL * max(reference, 1.0)))


# ---- Operations ----

def check_boundary_matrices(W_B: np.ndarray, W_C: np.ndarray) -> PassivityVerdict:
    """Impedance passivity of a boundary port: W* Sigma W - Sigma must be PSD."""
    W = np.vstack([np.asarray(W_B), np.asarray(W_C)])
    if W.shape != (4, 4):
        raise SingularBoundaryMatrix(f"[W_B; W_C] must be 4x4, got {W.shape}")
    if _rank(W, float(np.linalg.norm(W, 2))) < 4:
        raise SingularBoundaryMatrix("[W_B; W_C] is not invertible")

    Q = W.conj().T @ SIGMA @ W - SIGMA
    margin, vector = _psd_margin(Q)
    passed = margin >= -TOL_PSD * _scale(Q)
    if passed:
        return PassivityVerdict(passed=True, margin=margin)

    value = float(np.real(vector.conj() @ Q @ vector))
    return PassivityVerdict(passed=False, margin=margin, witness=list(vector), witness_value=value)


def check_controller(c: ControllerSpec) -> ControllerVerdict:
    """Passivity, kappa, kernel inclusion and internal stability of one controller."""
    n = c.n
    G = np.block([[c.A_c, c.B_c], [-c.C_c, -c.D_c]]) if n else -c.D_c
    Q = hermitian_part(G)
    top = float(linalg.eigvalsh(Q)[-1])
    passive = top <= TOL_PSD * _scale(Q)

    DD = c.D_c.conj().T @ c.D_c
    E_feed = np.zeros_like(Q)
    E_feed[n:, n:] = DD
    kappa = 0.0
    if passive and np.linalg.norm(c.D_c) > 0.0:
        lam = _smallest_positive_eigenvalue(DD)
        kappa_max = max(1.0 / lam + 1.0, np.linalg.norm(Q, 2) / lam + 1.0)
        kappa = largest_kappa(_nsd_feasible(Q, E_feed), kappa_max)

    CD = np.hstack([c.C_c, c.D_c]) if n else c.D_c
    E_out = CD.conj().T @ CD
    kappa_output = 0.0
    if passive and np.linalg.norm(CD) > 0.0:
        lam = _smallest_positive_eigenvalue(E_out)
        kappa_max = max(1.0 / lam + 1.0, np.linalg.norm(Q, 2) / lam + 1.0)
        kappa_output = largest_kappa(_nsd_feasible(Q, E_out), kappa_max)

    reference = max(float(np.linalg.norm(c.D_c)), float(np.linalg.norm(c.B_c)) if n else 0.0)
    kernel_inclusion = _rank(np.vstack([c.D_c, c.B_c]), reference) == _rank(c.D_c, reference)

    abscissa = float(np.max(np.linalg.eigvals(c.A_c).real)) if n else float("-inf")
    verdict = ControllerVerdict(
        passive=bool(passive),
        kappa=float(kappa),
        kernel_inclusion=bool(kernel_inclusion),
        internally_stable=bool(abscissa < 0.0),
        spectral_abscissa_Ac=abscissa,
        kappa_output=float(kappa_output),
        passivity_margin=-top,
    )
    logger.debug("Controller n=%d: %s", n, verdict)
    return verdict


def check_all_ports(model: ChainModel) -> Tuple[Dict[str, PassivityVerdict], Dict[str, ControllerVerdict]]:
    """Run the boundary and controller checks for every port of the chain."""
    boundary = {}
    for end in (model.left_end, model.right_end):
        if end.kind == "explicit":
            boundary[end.side] = check_boundary_matrices(end.W_B, end.W_C)
    controllers = {label: check_controller(spec) for label, spec in model.controllers()}
    return boundary, controllers


# ---- Dissipation classification ----

def _end_constraints(port: PortMap, verdict: Optional[ControllerVerdict]) -> Tuple[np.ndarray, np.ndarray]:
    """Basis of admissible end traces and the certified dissipation form on them."""
    if port.controller is None:
        constraint = port.Gamma_B + port.K @ port.Gamma_C
        Q = port.dissipation_form()
    else:
        ctrl = port.controller
        constraint = port.Gamma_B + ctrl.D_c @ port.Gamma_C
        if ctrl.n:
            reach = linalg.orth(ctrl.C_c)
            constraint = constraint - reach @ (reach.conj().T @ constraint)
        kappa = verdict.kappa if verdict is not None else 0.0
        Q = port.loss + kappa * port.Gamma_C.T @ (ctrl.D_c.conj().T @ ctrl.D_c) @ port.Gamma_C
    basis = linalg.null_space(constraint, rcond=RANK_TOL * 1e3)
    return basis, hermitian_part(Q)


def _independent_rows(G: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Rows of G that are independent on the admissible traces, velocity traces first."""
    order = np.argsort([int(np.argmax(np.abs(r))) for r in rows], kind="stable")
    reference = float(np.linalg.norm(G)) if G.size else 1.0
    kept: List[int] = []
    for idx in order:
        if _rank(G[kept + [idx]], reference) > len(kept):
            kept.append(idx)
    return G[kept]


def _end_kappa(basis: np.ndarray, Q: np.ndarray, rows: np.ndarray) -> float:
    if rows.shape[0] == 0 or basis.shape[1] == 0:
        return float("inf")
    Q_v = basis.conj().T @ Q @ basis
    # a component fixed by the closure in terms of others is counted once
    G = _independent_rows(rows @ basis, rows)
    if G.shape[0] == 0:
        return float("inf")
    E_v = G.conj().T @ G
    if np.linalg.norm(E_v) <= RANK_TOL * 1e3:
        return float("inf")
    lam = _smallest_positive_eigenvalue(E_v)
    if lam <= 0.0:
        return float("inf")
    kappa_max = float(np.linalg.norm(Q_v, 2)) / lam + 1.0
    return largest_kappa(_nsd_feasible(-Q_v, E_v), kappa_max)


def _damping_margin(end: EndConditionSpec) -> float:
    if end.kind == "dissipative" and end.K is not None:
        return float(linalg.eigvalsh(hermitian_part(end.K))[0])
    if end.controller is not None:
        return float(linalg.eigvalsh(hermitian_part(end.controller.D_c))[0])
    return 0.0


def classify_dissipation(
    model: ChainModel,
    controller_verdicts: Optional[Dict[str, ControllerVerdict]] = None,
    boundary_verdicts: Optional[Dict[str, PassivityVerdict]] = None,
) -> DissipationClass:
    """Find the strongest trace selector R with Re<Ax, x> <= -kappa |Rx|^2."""
    controller_verdicts = controller_verdicts or {}
    boundary_verdicts = boundary_verdicts or {}

    ends = {}
    for end in (model.left_end, model.right_end):
        verdict = boundary_verdicts.get(end.side)
        if verdict is not None and not verdict.passed:
            return DissipationClass(family="none", selector=None, components=(), kappa=0.0)
        port = end_port(end)
        ends[end.side] = _end_constraints(port, controller_verdicts.get(end.side))

    all_stable = all(v.internally_stable for v in controller_verdicts.values())
    families = [
        ("exponential-automatic", AUTOMATIC_SELECTORS if all_stable else {}),
        ("exponential", EXPONENTIAL_SELECTORS),
        ("asymptotic", ASYMPTOTIC_SELECTORS),
        ("point-spectrum-zero-only", ZERO_ONLY_SELECTORS),
    ]

    certified: Dict[str, float] = {}
    best: Optional[DissipationClass] = None
    margin = _damping_margin(model.left_end)
    for family, selectors in families:
        for name, components in selectors.items():
            kappa = min(
                _end_kappa(*ends[side], selector_rows(components, side)) for side in ("left", "right")
            )
            if kappa <= TOL_BISECT:
                continue
            certified[name] = kappa
            if best is None or (best.family == family and kappa > best.kappa):
                best = DissipationClass(
                    family=family, selector=name, components=components, kappa=kappa, damping_margin=margin
                )

    if best is None:
        return DissipationClass(family="none", selector=None, components=(), kappa=0.0, damping_margin=margin)
    best.certified = certified
    logger.debug("Dissipation class %s (%s), kappa=%g", best.family, best.selector, best.kappa)
    return best


# ---- Stability theorem conditions ----

def _is_diag_psd(K: np.ndarray) -> bool:
    off = abs(K[0, 1]) + abs(K[1, 0])
    diag = np.real(np.diag(K))
    return off == 0.0 and np.all(np.imag(np.diag(K)) == 0.0) and bool(np.all(diag >= 0.0))


def _is_herm_pd(K: np.ndarray) -> bool:
    return float(linalg.eigvalsh(hermitian_part(K))[0]) > TOL_PSD * _scale(K)


def theorem_conditions(model: ChainModel) -> Dict[str, Any]:
    """Structural conditions (D), (C), (I) of the serially connected beam result."""
    left, right = model.left_end, model.right_end

    d_form = None
    if left.kind == "dissipative" and left.controller is None and left.K is not None:
        K0 = left.K
        if _is_herm_pd(K0):
            d_form = "hermitian-positive-definite"
        elif K0[0, 0].real > 0.0 and np.count_nonzero(K0) == 1 and np.imag(K0[0, 0]) == 0.0:
            d_form = "diag(k,0)"
    condition_d = d_form is not None

    condition_c = False
    if right.is_conservative:
        if right.kind in ("free", "shear_hinge"):
            condition_c = d_form == "hermitian-positive-definite"
        else:
            condition_c = condition_d

    condition_i = all(
        j.controller is None and (_is_diag_psd(j.K) or _is_herm_pd(j.K)) for j in model.junctions
    )
    return {
        "D": {"holds": condition_d, "form": d_form},
        "C": {"holds": condition_c, "right_end": right.kind},
        "I": {"holds": condition_i},
    }


DISCREPANCY_NOTES = [
    "Controller assumption: the printed kappa term is unsquared; the squared form |D_c u|^2 is used.",
    "Shear hinge closure: the printed shear condition sits at zeta = 0; the right-end reading is used.",
    "Dissipative left end: the printed sign supplies energy under the stated power balance; "
    "(EI w_zz, -(EI w_zz)_z)(0) = K0 (w_tz, w_t)(0) is used.",
    "Matrix jump condition: H^j(1) - H^{j+1}(0) is tested; the printed orientation is reported as printed_margin.",
    "Right-end pairing: free and shear-hinge ends require Herm K0 > 0 (the printed statement names pinned and free).",
]
